/**
 * Name-map extraction: read the unstripped twin's symbol table and emit the
 * vtable address ranges that let the analyzer's scorer translate recovered
 * class ids (primary address points) back to source-level names.
 */

import { execFileSync } from "node:child_process";

export interface VtableRange {
  name: string;
  start: string;
  end: string;
  construction: boolean;
  label: string;
}

export interface NameMap {
  ranges: VtableRange[];
}

const NM_LINE = /^([0-9a-f]+) ([0-9a-f]+) [VvWwDdRrBb] (.+)$/;

/** Collect vtable/construction-vtable symbol ranges from `nm -SC` output. */
export function extractNameMap(binaryPath: string): NameMap {
  const out = execFileSync("nm", ["-SC", binaryPath], { encoding: "utf-8" });
  const ranges: VtableRange[] = [];
  for (const line of out.split("\n")) {
    const m = line.match(NM_LINE);
    if (!m) {
      continue;
    }
    const [, value, size, demangled] = m;
    const start = BigInt("0x" + value);
    const end = start + BigInt("0x" + size);
    const cv = demangled.match(/^construction vtable for (.+)-in-(.+)$/);
    const tv = demangled.match(/^vtable for (.+)$/);
    if (cv) {
      ranges.push({
        name: cv[1],
        start: hex(start),
        end: hex(end),
        construction: true,
        label: `${cv[1]}-in-${cv[2]}`,
      });
    } else if (tv && !tv[1].startsWith("__cxxabiv1")) {
      ranges.push({
        name: tv[1],
        start: hex(start),
        end: hex(end),
        construction: false,
        label: tv[1],
      });
    }
  }
  ranges.sort((a, b) => (BigInt(a.start) < BigInt(b.start) ? -1 : 1));
  return { ranges };
}

/** Classes with any vtable presence (regular or construction) in the binary. */
export function presentClasses(map: NameMap): Set<string> {
  return new Set(map.ranges.map((r) => r.name));
}

function hex(v: bigint): string {
  return "0x" + v.toString(16);
}
