/**
 * Corpus builder: compiles every fixture, prunes the configured VTT
 * symbols, links stripped/unstripped twins, converts the compiler's class
 * dump to canonical ground-truth JSON, and writes the vtable name maps.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";

import { COMMON_CXXFLAGS, CORPUS, FixtureSpec, Variant } from "./corpus";
import { parseClassDump, toGroundTruth } from "./classdump";
import { extractNameMap, presentClasses } from "./namemap";

function run(cmd: string, args: string[], cwd?: string): void {
  execFileSync(cmd, args, { cwd, stdio: ["ignore", "inherit", "inherit"] });
}

function writeJson(file: string, payload: unknown): void {
  fs.writeFileSync(file, JSON.stringify(payload, null, 2) + "\n");
}

/** Drop a VTT's data section (and its relocations and symbol) from an object. */
function pruneVttSections(objFile: string, vttSymbols: string[]): void {
  const args: string[] = [];
  for (const sym of vttSymbols) {
    const section = `.data.rel.ro.local.${sym}`;
    args.push("-R", section, "-R", `.rela${section}`, "--strip-symbol", sym);
  }
  run("objcopy", [...args, objFile]);
}

export function buildFixture(
  fixturesRoot: string,
  spec: FixtureSpec,
  tmpRoot: string,
): void {
  const fixtureDir = path.join(fixturesRoot, spec.name);
  const srcDir = path.join(fixtureDir, "src");
  const binDir = path.join(fixtureDir, "bin");
  fs.mkdirSync(binDir, { recursive: true });
  const compiler = spec.language === "c++" ? "g++" : "gcc";

  for (const variant of spec.variants) {
    const flags = [...COMMON_CXXFLAGS];
    flags[flags.indexOf("-O0")] = variant.optLevel;
    const workDir = fs.mkdtempSync(path.join(tmpRoot, `${spec.name}-`));

    const objects: string[] = [];
    for (const source of spec.sources) {
      const obj = path.join(workDir, source.replace(/\.(cpp|c)$/, ".o"));
      run(compiler, [...flags, "-c", path.join(srcDir, source), "-o", obj]);
      objects.push(obj);
    }
    if (spec.pruneVtts && spec.pruneVtts.length > 0) {
      for (const obj of objects) {
        pruneVttSections(obj, spec.pruneVtts);
      }
    }

    const symBinary = path.join(binDir, `${spec.name}${variant.suffix}.sym`);
    const binary = path.join(binDir, `${spec.name}${variant.suffix}`);
    run(compiler, [...flags, ...objects, "-o", symBinary]);
    run("objcopy", ["--strip-all", symBinary, binary]);

    if (spec.language === "c++" && spec.dumpSource) {
      const map = extractNameMap(symBinary);
      const dumpFile = path.join(workDir, "classes.dump");
      run(compiler, [
        ...flags,
        `-fdump-lang-class=${dumpFile}`,
        "-c",
        path.join(srcDir, spec.dumpSource),
        "-o",
        path.join(workDir, "dump.o"),
      ]);
      const dumped = parseClassDump(fs.readFileSync(dumpFile, "utf-8"));
      const gt = toGroundTruth(dumped, presentClasses(map));
      writeJson(path.join(fixtureDir, `gt${variant.suffix}.json`), gt);
      writeJson(path.join(fixtureDir, `map${variant.suffix}.json`), map);
      fs.copyFileSync(dumpFile, path.join(fixtureDir, `classes${variant.suffix}.dump`));
    }
  }
}

export function buildAll(fixturesRoot: string, only?: string): string[] {
  const tmpRoot = fs.mkdtempSync(path.join(fs.realpathSync("/tmp"), "corpus-"));
  const built: string[] = [];
  for (const spec of CORPUS) {
    if (only && spec.name !== only) {
      continue;
    }
    buildFixture(fixturesRoot, spec, tmpRoot);
    built.push(spec.name);
  }
  return built;
}
