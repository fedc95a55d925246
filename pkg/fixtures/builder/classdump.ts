/**
 * Parser for GCC's textual class-hierarchy dump (-fdump-lang-class) and
 * conversion to the canonical ground-truth JSON consumed by the analyzer's
 * diff-gt command.
 */

export interface GtClass {
  name: string;
  virtual_bases: string[];
  intermediate_bases: string[];
  direct_bases: string[];
}

export interface GroundTruth {
  classes: GtClass[];
  removed: string[];
}

interface DumpEntry {
  name: string;
  flags: string;
  attrs: string[];
}

const CLASS_HEADER = /^(?:Class|Struct) (.+)$/;
// e.g. `B (0x0x7f...) 0`, `A (0x0x7f...) 32 virtual`, `A (0x...) alternative-path`
const ENTRY = /^(\S[^(]*?) \(0x0x[0-9a-f]+\)(.*)$/;

/** Parse one class block's entry list into base-class facts. */
function digestEntries(className: string, entries: DumpEntry[]): GtClass {
  const virtualBases = new Set<string>();
  const intermediateBases = new Set<string>();
  const directBases = new Set<string>();

  for (const entry of entries) {
    if (entry.name === className && entries.indexOf(entry) === 0) {
      continue;
    }
    if (entry.flags.includes("alternative-path")) {
      continue;
    }
    const isVirtual = / virtual\b/.test(entry.flags);
    if (isVirtual) {
      virtualBases.add(entry.name);
    }
    if (entry.attrs.some((a) => a.includes("subvttidx="))) {
      intermediateBases.add(entry.name);
    }
    // Depth-1 entries carry attribute lines indented by exactly six spaces.
    const depthOne = entry.attrs.some((a) => /^ {6}\S/.test(a));
    if (depthOne && !isVirtual) {
      directBases.add(entry.name);
    }
    if (depthOne && isVirtual) {
      // Directly inherited virtual base: recorded as virtual only.
    }
  }
  return {
    name: className,
    virtual_bases: [...virtualBases].sort(),
    intermediate_bases: [...intermediateBases].sort(),
    direct_bases: [...directBases].sort(),
  };
}

/** Extract all class blocks from a -fdump-lang-class dump. */
export function parseClassDump(text: string): GtClass[] {
  const lines = text.split(/\r?\n/);
  const classes: GtClass[] = [];
  let i = 0;
  while (i < lines.length) {
    const header = lines[i].match(CLASS_HEADER);
    if (!header) {
      i += 1;
      continue;
    }
    const className = header[1].trim();
    i += 1;
    const entries: DumpEntry[] = [];
    while (i < lines.length && lines[i].trim() !== "") {
      const line = lines[i];
      if (/^ {2,}\S/.test(line)) {
        // size/align preamble or attribute line for the previous entry
        if (entries.length > 0 && !/^ {3}(?:size|base size)/.test(line)) {
          entries[entries.length - 1].attrs.push(line);
        }
        i += 1;
        continue;
      }
      const entry = line.match(ENTRY);
      if (entry) {
        entries.push({ name: entry[1].trim(), flags: entry[2], attrs: [] });
      }
      i += 1;
    }
    classes.push(digestEntries(className, entries));
  }
  classes.sort((a, b) => a.name.localeCompare(b.name));
  return classes;
}

/**
 * Assemble the canonical GT. `presentClasses` are the classes with any
 * vtable trace in the linked binary (regular or construction); dump-only
 * classes were eliminated by the compiler or linker and move to `removed`.
 */
export function toGroundTruth(
  dumped: GtClass[],
  presentClasses: Set<string>,
): GroundTruth {
  const removed = dumped
    .map((c) => c.name)
    .filter((n) => !presentClasses.has(n))
    .sort();
  const kept = dumped.filter((c) => presentClasses.has(c.name));
  return { classes: kept, removed };
}
