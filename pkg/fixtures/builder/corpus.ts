/**
 * Corpus definitions: every compiled fixture, its translation units and
 * build variants. The layout contract is fixtures/<name>/{src,bin,gt.json,map.json}.
 */

export interface Variant {
  /** Suffix appended to the binary name ("" for the default -O0 build). */
  suffix: string;
  optLevel: string;
}

export interface FixtureSpec {
  name: string;
  language: "c++" | "c";
  /** Translation units relative to fixtures/<name>/src. */
  sources: string[];
  /** TU to compile with the class-hierarchy dump enabled (must see all classes). */
  dumpSource?: string;
  /**
   * VTT symbols dropped from the object files before linking. Keeps the
   * golden binary in the single-VTT shape the analyzer's reference data
   * pins down (a VTT is emitted in the same comdat group as its vtable,
   * so section GC alone can never remove one).
   */
  pruneVtts?: string[];
  variants: Variant[];
}

export const COMMON_CXXFLAGS = ["-O0", "-no-pie", "-fcf-protection"];

export const CORPUS: FixtureSpec[] = [
  {
    name: "running_example",
    language: "c++",
    sources: ["a.cpp", "b.cpp", "c.cpp", "d.cpp", "main.cpp"],
    dumpSource: "main.cpp",
    pruneVtts: ["_ZTT1B", "_ZTT1C"],
    variants: [
      { suffix: "", optLevel: "-O0" },
      { suffix: "_O2", optLevel: "-O2" },
    ],
  },
  {
    name: "chain1",
    language: "c++",
    sources: ["chain1.cpp"],
    dumpSource: "chain1.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "chain2",
    language: "c++",
    sources: ["chain2.cpp"],
    dumpSource: "chain2.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "chain3",
    language: "c++",
    sources: ["chain3.cpp"],
    dumpSource: "chain3.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "allvirtual",
    language: "c++",
    sources: ["allvirtual.cpp"],
    dumpSource: "allvirtual.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "mixed",
    language: "c++",
    sources: ["mixed.cpp"],
    dumpSource: "mixed.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "orphan_chain",
    language: "c++",
    sources: ["orphan_chain.cpp"],
    dumpSource: "orphan_chain.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    // The virtual base is abstract: its vtable slots hold the imported
    // pure-virtual handler behind a runtime relocation, so the base class
    // itself is unrecoverable from the file image (under-estimation case).
    name: "abstract_base",
    language: "c++",
    sources: ["abstract_base.cpp"],
    dumpSource: "abstract_base.cpp",
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
  {
    name: "pure_c",
    language: "c",
    sources: ["pure_c.c"],
    variants: [{ suffix: "", optLevel: "-O0" }],
  },
];
