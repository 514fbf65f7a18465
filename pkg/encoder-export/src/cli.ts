/** Shared flag parsing for the export scripts. Exit codes: 0 success,
 * 1 usage error, 2 data or checkpoint error. */

import { CheckpointUnavailableError } from "./encoders";

export interface ParsedFlags {
  [key: string]: string;
}

export function parseFlags(argv: string[], known: string[], usage: string): ParsedFlags {
  const flags: ParsedFlags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--") || !known.includes(flag.slice(2))) {
      process.stderr.write(`unknown flag ${flag}\n${usage}\n`);
      process.exit(1);
    }
    const value = argv[i + 1];
    if (value === undefined) {
      process.stderr.write(`flag ${flag} needs a value\n${usage}\n`);
      process.exit(1);
    }
    flags[flag.slice(2)] = value;
  }
  return flags;
}

export function requireFlag(flags: ParsedFlags, name: string, usage: string): string {
  const value = flags[name];
  if (value === undefined) {
    process.stderr.write(`missing required flag --${name}\n${usage}\n`);
    process.exit(1);
  }
  return value;
}

export function runExport(main: () => { records: number; dim: number }, label: string): void {
  try {
    const { records, dim } = main();
    process.stdout.write(`${label}: wrote ${records} records (d=${dim})\n`);
    process.exit(0);
  } catch (err) {
    if (err instanceof CheckpointUnavailableError) {
      process.stderr.write(`${err.message}\n`);
      process.exit(2);
    }
    process.stderr.write(`${label}: ${(err as Error).message}\n`);
    process.exit(2);
  }
}
