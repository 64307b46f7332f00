/**
 * Convert a natively recorded DVS fingerspelling archive into canonical
 * .evs files plus manifest and cross-subject split lists.
 *
 * Supported container variant (sniffed and enforced): one directory per
 * letter (a..y, no j/z), each holding MAT v5 files with numeric vectors
 * ts (microseconds), x, y, pol (0/1 or -1/+1), recorded on a 240x180
 * sensor. Subjects are not encoded in the archive's file names; samples
 * within a letter are ordered and assigned to 5 equal subject blocks,
 * which matches the per-class block layout of the published recording
 * (5 subjects, equal sample counts). Subjects 0-3 go to the training
 * list, subject 4 to the test list.
 */

import { mkdirSync, readFileSync, readdirSync, statSync, writeFileSync } from 'node:fs';
import { basename, join } from 'node:path';

import { encodeEvents } from './evs.js';
import { readMat } from './mat.js';
import {
  ConversionManifest,
  LETTERS,
  ManifestRow,
  classOfLetter,
  sha256,
  writeManifestCsv,
} from './manifest.js';

export const SENSOR_WIDTH = 240;
export const SENSOR_HEIGHT = 180;
const SUBJECTS = 5;

export interface AslDvsResult {
  manifest: ConversionManifest;
  trainList: string[];
  testList: string[];
}

export function convertAslDvs(sourceDir: string, outDir: string): AslDvsResult {
  mkdirSync(outDir, { recursive: true });
  const rows: ManifestRow[] = [];
  const trainList: string[] = [];
  const testList: string[] = [];

  const letterDirs = readdirSync(sourceDir)
    .filter((d) => statSync(join(sourceDir, d)).isDirectory())
    .filter((d) => LETTERS.includes(d.toUpperCase()))
    .sort();
  if (letterDirs.length === 0) {
    throw new Error(`no letter directories found under ${sourceDir}`);
  }

  for (const letterDir of letterDirs) {
    const letter = letterDir.toUpperCase();
    const classIndex = classOfLetter(letter);
    const files = readdirSync(join(sourceDir, letterDir))
      .filter((f) => f.endsWith('.mat'))
      .sort();
    files.forEach((file, i) => {
      const sampleId = `${letterDir}/${basename(file, '.mat')}`;
      const subject = Math.min(Math.floor((i * SUBJECTS) / files.length), SUBJECTS - 1);
      try {
        const evs = convertOneMat(readFileSync(join(sourceDir, letterDir, file)));
        const outName = `${subject === SUBJECTS - 1 ? 'test' : 'train'}_${String(rows.length).padStart(5, '0')}_${classIndex}.evs`;
        const encoded = encodeEvents(evs);
        writeFileSync(join(outDir, outName), encoded);
        rows.push({
          sampleId,
          letter,
          classIndex,
          events: evs.t.length,
          durationUs: evs.t.length ? Number(evs.t[evs.t.length - 1]) : 0,
          checksum: sha256(encoded),
          outFile: outName,
          status: 'ok',
          reason: '',
        });
        (subject === SUBJECTS - 1 ? testList : trainList).push(outName);
      } catch (err) {
        rows.push({
          sampleId,
          letter,
          classIndex,
          events: 0,
          durationUs: 0,
          checksum: '',
          outFile: '',
          status: 'skipped',
          reason: (err as Error).message.replaceAll(',', ';'),
        });
      }
    });
  }

  const manifest: ConversionManifest = { dataset: 'asl_dvs_mat', rows };
  writeManifestCsv(join(outDir, 'manifest.csv'), manifest);
  writeFileSync(join(outDir, 'train.txt'), trainList.join('\n') + (trainList.length ? '\n' : ''));
  writeFileSync(join(outDir, 'test.txt'), testList.join('\n') + (testList.length ? '\n' : ''));
  return { manifest, trainList, testList };
}

export function convertOneMat(blob: Uint8Array) {
  const vars = readMat(blob);
  const ts = vars.get('ts');
  const xs = vars.get('x');
  const ys = vars.get('y');
  const pol = vars.get('pol');
  if (!ts || !xs || !ys || !pol) {
    throw new Error('container missing one of ts/x/y/pol');
  }
  const n = ts.data.length;
  if (xs.data.length !== n || ys.data.length !== n || pol.data.length !== n) {
    throw new Error('ts/x/y/pol lengths disagree');
  }
  // rebase to zero and sort by time, keeping the original order for ties
  const order = Array.from({ length: n }, (_, i) => i).sort((a, b) => {
    const d = ts.data[a] - ts.data[b];
    return d !== 0 ? d : a - b;
  });
  const t0 = n ? ts.data[order[0]] : 0;
  const out = {
    width: SENSOR_WIDTH,
    height: SENSOR_HEIGHT,
    t: new BigInt64Array(n),
    x: new Uint16Array(n),
    y: new Uint16Array(n),
    p: new Int8Array(n),
  };
  for (let i = 0; i < n; i++) {
    const j = order[i];
    const x = xs.data[j];
    const y = ys.data[j];
    if (x < 0 || x >= SENSOR_WIDTH || y < 0 || y >= SENSOR_HEIGHT) {
      throw new Error(`coordinate out of 240x180 bounds at event ${j}`);
    }
    out.t[i] = BigInt(Math.round(ts.data[j] - t0));
    out.x[i] = x;
    out.y[i] = y;
    out.p[i] = pol.data[j] > 0 ? 1 : -1;
  }
  return out;
}
