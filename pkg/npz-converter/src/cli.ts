#!/usr/bin/env node
import { convert, loadMapping } from "./convert.js";

function usage(): never {
  console.error(
    "usage: npz-convert --archive DIR --mapping mapping.json --out DIR");
  process.exit(1);
}

function main(argv: string[]): number {
  const opts: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith("--") || value === undefined) usage();
    opts[flag.slice(2)] = value;
  }
  if (!opts.archive || !opts.mapping || !opts.out) usage();
  try {
    const result = convert(opts.archive, loadMapping(opts.mapping), opts.out);
    console.log(`wrote ${result.entries.length} shapes and ${result.manifestPath}`);
    return 0;
  } catch (e) {
    console.error(`error: ${e instanceof Error ? e.message : e}`);
    return 2;
  }
}

process.exit(main(process.argv.slice(2)));
