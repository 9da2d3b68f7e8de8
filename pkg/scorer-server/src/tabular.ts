/**
 * pragma-tabular v1: exact finite scoring tables.
 *
 * The file format is shared with the decoder toolkit: a version header,
 * `source:` / `target:` vocabulary sections (end-of-sentence marker
 * implicit, listed last), and `given <source> | <prefix>:` blocks of
 * `<token> <probability>` lines. Tables are a closed world; queries
 * outside them are errors, never smoothed.
 */

import * as fs from "fs";

export const EOS_SURFACE = "</s>";
export const NEG_INF = -Infinity;

export class TabularError extends Error {
  constructor(public code: "bad-request" | "unknown-token" | "missing-entry", message: string) {
    super(message);
  }
}

export interface Vocabulary {
  surfaces: string[]; // includes EOS as the final entry
  eosId: number;
}

function makeVocab(words: string[]): Vocabulary {
  const surfaces = [...words, EOS_SURFACE];
  return { surfaces, eosId: surfaces.length - 1 };
}

type TableKey = string; // "src ids|prefix ids"

function key(source: number[], prefix: number[]): TableKey {
  return `${source.join(" ")}|${prefix.join(" ")}`;
}

export class TabularModel {
  constructor(
    public sourceVocab: Vocabulary,
    public targetVocab: Vocabulary,
    private tables: Map<TableKey, Map<number, number>>,
    public modelTag: string,
  ) {}

  private checkTokens(ids: unknown, vocab: Vocabulary, what: string): number[] {
    if (!Array.isArray(ids) || ids.some((t) => !Number.isInteger(t))) {
      throw new TabularError("bad-request", `${what} must be an array of integer token ids`);
    }
    for (const t of ids as number[]) {
      if (t < 0 || t >= vocab.surfaces.length) {
        throw new TabularError("unknown-token", `token id ${t} outside vocabulary of size ${vocab.surfaces.length}`);
      }
    }
    return ids as number[];
  }

  /** Source key: trailing EOS stripped so truncated runs are scorable. */
  private sourceKey(ids: unknown): number[] {
    const tokens = this.checkTokens(ids, this.sourceVocab, "source");
    const inner = tokens[tokens.length - 1] === this.sourceVocab.eosId ? tokens.slice(0, -1) : tokens;
    if (inner.includes(this.sourceVocab.eosId)) {
      throw new TabularError("bad-request", "EOS may appear only as the final source token");
    }
    return inner;
  }

  private prefixKey(ids: unknown): number[] {
    const tokens = this.checkTokens(ids, this.targetVocab, "prefix");
    if (tokens.includes(this.targetVocab.eosId)) {
      throw new TabularError("bad-request", "a prefix may not contain EOS");
    }
    return tokens;
  }

  /** Log probabilities over the full target vocabulary, EOS included. */
  nextTokenLogprobs(source: unknown, prefix: unknown): number[] {
    const src = this.sourceKey(source);
    const pre = this.prefixKey(prefix);
    const table = this.tables.get(key(src, pre));
    if (table === undefined) {
      throw new TabularError("missing-entry", `no table for 'given ${this.describe(src, pre)}'`);
    }
    const out: number[] = [];
    for (let t = 0; t < this.targetVocab.surfaces.length; t++) {
      const p = table.get(t) ?? 0;
      out.push(p > 0 ? Math.log(p) : NEG_INF);
    }
    return out;
  }

  /**
   * Chain-rule sentence log probability, EOS step included, so it always
   * equals the sum of this server's own next-token log probabilities.
   */
  sequenceLogprob(source: unknown, sentence: unknown): number {
    const tokens = this.checkTokens(sentence, this.targetVocab, "sentence");
    if (tokens.length === 0 || tokens[tokens.length - 1] !== this.targetVocab.eosId) {
      throw new TabularError("bad-request", "sentence must end with EOS");
    }
    if (tokens.slice(0, -1).includes(this.targetVocab.eosId)) {
      throw new TabularError("bad-request", "EOS may appear only as the final token");
    }
    let total = 0;
    const prefix: number[] = [];
    for (const tok of tokens) {
      const logprobs = this.nextTokenLogprobs(source, prefix);
      const lp = logprobs[tok];
      if (lp === NEG_INF) {
        return NEG_INF; // zero-probability step: stop before leaving the closed world
      }
      total += lp;
      prefix.push(tok);
    }
    return total;
  }

  private describe(src: number[], pre: number[]): string {
    const s = src.map((t) => this.sourceVocab.surfaces[t]).join(" ");
    const p = pre.map((t) => this.targetVocab.surfaces[t]).join(" ");
    return `${s} | ${p}`;
  }
}

export function parseTabular(text: string, modelTag: string): TabularModel {
  const lines = text.split(/\r?\n/);
  let pos = 0;

  const fail = (message: string, line: number): never => {
    throw new Error(`line ${line}: ${message}`);
  };
  const meaningful = (i: number): number => {
    while (i < lines.length && (lines[i].trim() === "" || lines[i].trimStart().startsWith("#"))) i++;
    return i;
  };

  pos = meaningful(0);
  if (pos >= lines.length) fail("empty file", 1);
  if (lines[pos].trim() !== "pragma-tabular v1") fail("expected header 'pragma-tabular v1'", pos + 1);
  pos++;

  const readVocab = (section: string): Vocabulary => {
    pos = meaningful(pos);
    if (pos >= lines.length || lines[pos].trim() !== `${section}:`) {
      fail(`expected '${section}:' section`, pos + 1);
    }
    pos++;
    const words: string[] = [];
    for (;;) {
      const j = meaningful(pos);
      if (j >= lines.length) break;
      const stripped = lines[j].trim();
      if (stripped.endsWith(":") || /^\s/.test(lines[j])) break;
      if (stripped.split(/\s+/).length !== 1) fail("vocabulary lines hold a single surface form", j + 1);
      if (stripped === EOS_SURFACE) fail("EOS is implicit and may not be listed", j + 1);
      if (words.includes(stripped)) fail(`duplicate surface form '${stripped}'`, j + 1);
      words.push(stripped);
      pos = j + 1;
    }
    if (words.length === 0) fail(`'${section}:' section lists no words`, pos + 1);
    return makeVocab(words);
  };

  const sourceVocab = readVocab("source");
  const targetVocab = readVocab("target");

  const idOf = (vocab: Vocabulary, surface: string, line: number): number => {
    if (surface === EOS_SURFACE) return vocab.eosId;
    const id = vocab.surfaces.indexOf(surface);
    if (id < 0 || id === vocab.eosId) fail(`unknown token '${surface}'`, line);
    return id;
  };

  const tables = new Map<TableKey, Map<number, number>>();
  const names = new Map<TableKey, string>();
  let current: Map<number, number> | null = null;

  pos = meaningful(pos);
  while (pos < lines.length) {
    const raw = lines[pos];
    const stripped = raw.trim();
    if (/^\s/.test(raw)) {
      if (current === null) fail("entry line outside a 'given' block", pos + 1);
      const parts = stripped.split(/\s+/);
      if (parts.length !== 2) fail("entry lines are '<token> <probability>'", pos + 1);
      const tok = idOf(targetVocab, parts[0], pos + 1);
      const prob = Number(parts[1]);
      if (!Number.isFinite(prob) || prob < 0) fail(`bad probability literal '${parts[1]}'`, pos + 1);
      if (current!.has(tok)) fail(`duplicate token '${parts[0]}' in block`, pos + 1);
      current!.set(tok, prob);
    } else {
      if (!stripped.startsWith("given ") || !stripped.endsWith(":")) {
        fail("expected a 'given <source> | <prefix>:' block", pos + 1);
      }
      const body = stripped.slice("given ".length, -1);
      const bar = body.split("|");
      if (bar.length !== 2) fail("block header needs exactly one '|'", pos + 1);
      const src = bar[0].trim().split(/\s+/).filter(Boolean).map((s) => idOf(sourceVocab, s, pos + 1));
      const pre = bar[1].trim().split(/\s+/).filter(Boolean).map((s) => idOf(targetVocab, s, pos + 1));
      if (src.length === 0) fail("a block needs at least one source token", pos + 1);
      if (src.includes(sourceVocab.eosId) || pre.includes(targetVocab.eosId)) {
        fail("EOS may not appear in a block header", pos + 1);
      }
      const k = key(src, pre);
      if (tables.has(k)) fail(`duplicate block 'given ${body.trim()}'`, pos + 1);
      current = new Map();
      tables.set(k, current);
      names.set(k, stripped.slice(0, -1));
    }
    pos = meaningful(pos + 1);
  }

  if (tables.size === 0) fail("file defines no entry blocks", lines.length);
  for (const [k, table] of tables) {
    let total = 0;
    for (const p of table.values()) total += p;
    if (Math.abs(total - 1) > 1e-9) {
      throw new Error(`block '${names.get(k)}' sums to ${total}, not 1`);
    }
  }
  return new TabularModel(sourceVocab, targetVocab, tables, modelTag);
}

export function loadTabular(path: string): TabularModel {
  const text = fs.readFileSync(path, "utf-8");
  const stem = path.replace(/\\/g, "/").split("/").pop()!.replace(/\.[^.]*$/, "");
  return parseTabular(text, stem);
}
