/**
 * Validate and normalize the grayscale fingerspelling CSV (label + 784
 * pixels per row, labels 0..24 with 9 unused). The pixel-to-event
 * conversion itself lives in the recognition pipeline; this stage only
 * audits shape/labels and re-emits a canonical header + rows.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { ConversionManifest, LETTERS, ManifestRow, writeManifestCsv } from './manifest.js';

const FIELDS = 785;

export interface SlmnistResult {
  manifest: ConversionManifest;
  count: number;
  outCsv: string;
}

export function labelToClass(label: number): number {
  if (!Number.isInteger(label) || label < 0 || label > 24 || label === 9) {
    throw new Error(`label ${label} is not a static-letter label`);
  }
  return label < 9 ? label : label - 1;
}

export function convertSlmnist(csvPath: string, outDir: string, split = 'train'): SlmnistResult {
  mkdirSync(outDir, { recursive: true });
  const text = readFileSync(csvPath, 'utf8');
  const lines = text.split(/\r?\n/).filter((ln) => ln.length > 0);
  let start = 0;
  if (lines.length && !/^\s*-?\d/.test(lines[0])) start = 1; // header row

  const outLines: string[] = ['label,' + Array.from({ length: 784 }, (_, i) => `pixel${i + 1}`).join(',')];
  const rows: ManifestRow[] = [];
  const perClass = new Array(24).fill(0);
  for (let i = start; i < lines.length; i++) {
    const parts = lines[i].split(',');
    if (parts.length !== FIELDS) {
      throw new Error(`row ${i + 1}: expected ${FIELDS} fields, got ${parts.length}`);
    }
    const label = Number(parts[0]);
    const classIndex = labelToClass(label);
    for (let j = 1; j < FIELDS; j++) {
      const v = Number(parts[j]);
      if (!Number.isInteger(v) || v < 0 || v > 255) {
        throw new Error(`row ${i + 1}: pixel ${j} out of range`);
      }
    }
    perClass[classIndex]++;
    outLines.push(lines[i]);
  }
  const count = outLines.length - 1;
  const outCsv = join(outDir, `${split}_normalized.csv`);
  writeFileSync(outCsv, outLines.join('\n') + '\n');
  for (let c = 0; c < 24; c++) {
    rows.push({
      sampleId: `${split}/class_${LETTERS[c]}`,
      letter: LETTERS[c],
      classIndex: c,
      events: perClass[c], // sample count for CSV datasets
      durationUs: 0,
      checksum: '',
      outFile: outCsv,
      status: 'ok',
      reason: '',
    });
  }
  const manifest: ConversionManifest = { dataset: 'slmnist_csv', rows };
  writeManifestCsv(join(outDir, `${split}_manifest.csv`), manifest);
  return { manifest, count, outCsv };
}
