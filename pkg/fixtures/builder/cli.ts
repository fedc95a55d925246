/** Command-line entry point: `node dist/builder/cli.js [--only <fixture>]`. */

import * as path from "node:path";

import { buildAll } from "./build";

function main(): void {
  const args = process.argv.slice(2);
  let only: string | undefined;
  const onlyIdx = args.indexOf("--only");
  if (onlyIdx >= 0) {
    only = args[onlyIdx + 1];
  }
  const fixturesRoot = path.resolve(__dirname, "..", "..");
  const built = buildAll(fixturesRoot, only);
  for (const name of built) {
    console.log(`built ${name}`);
  }
  if (built.length === 0) {
    console.error(`no fixture matched ${only ?? "(none)"}`);
    process.exit(1);
  }
}

main();
