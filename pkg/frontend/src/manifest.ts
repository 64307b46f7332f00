/** Conversion manifest: one audited row per emitted (or skipped) file. */

import { createHash } from 'node:crypto';
import { writeFileSync } from 'node:fs';

export const LETTERS = 'ABCDEFGHIKLMNOPQRSTUVWXY'; // 24 static letters

export interface ManifestRow {
  sampleId: string;
  letter: string;
  classIndex: number;
  events: number;
  durationUs: number;
  checksum: string;
  outFile: string;
  status: 'ok' | 'skipped';
  reason: string;
}

export interface ConversionManifest {
  dataset: 'asl_dvs_mat' | 'slmnist_csv';
  rows: ManifestRow[];
}

export function classOfLetter(letter: string): number {
  const idx = LETTERS.indexOf(letter.toUpperCase());
  if (idx < 0) throw new Error(`'${letter}' is not one of the 24 static letters`);
  return idx;
}

export function sha256(data: Uint8Array): string {
  return createHash('sha256').update(data).digest('hex');
}

export function writeManifestCsv(path: string, manifest: ConversionManifest): void {
  const header = 'sample_id,letter,class_index,events,duration_us,checksum,out_file,status,reason';
  const lines = manifest.rows.map((r) =>
    [r.sampleId, r.letter, r.classIndex, r.events, r.durationUs, r.checksum,
     r.outFile, r.status, r.reason].join(','),
  );
  writeFileSync(path, [header, ...lines].join('\n') + '\n');
}

export function okRows(manifest: ConversionManifest): ManifestRow[] {
  return manifest.rows.filter((r) => r.status === 'ok');
}
