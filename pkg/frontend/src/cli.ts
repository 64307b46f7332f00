#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { convertAslDvs } from './aslDvs.js';
import { okRows } from './manifest.js';
import { convertSlmnist } from './slmnist.js';

await yargs(hideBin(process.argv))
  .scriptName('dataset-glue')
  .command(
    'asl-dvs <source> <out>',
    'convert a directory of per-letter MAT v5 event containers to .evs',
    (y) =>
      y
        .positional('source', { type: 'string', demandOption: true })
        .positional('out', { type: 'string', demandOption: true }),
    (argv) => {
      const { manifest, trainList, testList } = convertAslDvs(
        argv.source as string,
        argv.out as string,
      );
      const ok = okRows(manifest).length;
      const skipped = manifest.rows.length - ok;
      console.log(
        `converted ${ok} samples (${trainList.length} train / ${testList.length} test), skipped ${skipped}`,
      );
    },
  )
  .command(
    'slmnist <csv> <out>',
    'validate + normalize a label,784-pixel CSV',
    (y) =>
      y
        .positional('csv', { type: 'string', demandOption: true })
        .positional('out', { type: 'string', demandOption: true })
        .option('split', { type: 'string', default: 'train' }),
    (argv) => {
      const res = convertSlmnist(argv.csv as string, argv.out as string, argv.split as string);
      console.log(`validated ${res.count} rows -> ${res.outCsv}`);
    },
  )
  .demandCommand(1)
  .strict()
  .fail((msg, err) => {
    console.error(err ? `error: ${err.message}` : msg);
    process.exit(err ? 1 : 2);
  })
  .parseAsync();
