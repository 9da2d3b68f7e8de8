/**
 * pragma-score v1 message handling (see PROTOCOL.md at the repo root).
 *
 * One JSON object per line. Exact zeros travel as null; JSON.stringify
 * already maps -Infinity to null, and decoding maps null back.
 */

import { TabularError, TabularModel } from "./tabular";

export const PROTOCOL_VERSION = "pragma-score v1";

export type Response = Record<string, unknown>;

export function errorResponse(code: string, message: string): Response {
  return { kind: "error", code, message };
}

function scoringError(exc: unknown): Response {
  if (exc instanceof TabularError) {
    return errorResponse(exc.code, exc.message);
  }
  return errorResponse("internal", String(exc));
}

/** Body of the response for one request object (without the echoed id). */
export function handle(model: TabularModel, req: Record<string, unknown>): Response {
  const kind = req["kind"];
  switch (kind) {
    case "handshake":
      if (req["protocol"] !== PROTOCOL_VERSION) {
        return errorResponse("bad-request", `unsupported protocol ${JSON.stringify(req["protocol"])}`);
      }
      return {
        kind: "handshake",
        protocol: PROTOCOL_VERSION,
        source_vocab: model.sourceVocab.surfaces,
        target_vocab: model.targetVocab.surfaces,
        eos_id: model.targetVocab.eosId,
        model_tag: model.modelTag,
      };
    case "next_token_logprobs":
      try {
        return { kind: "logprobs", logprobs: model.nextTokenLogprobs(req["source"], req["prefix"]) };
      } catch (exc) {
        return scoringError(exc);
      }
    case "sequence_logprob":
      try {
        return { kind: "logprob", logprob: model.sequenceLogprob(req["source"], req["sentence"]) };
      } catch (exc) {
        return scoringError(exc);
      }
    case "batch": {
      const items = req["items"];
      if (!Array.isArray(items)) {
        return errorResponse("bad-request", "items must be a list");
      }
      return {
        kind: "batch",
        items: items.map((item) =>
          item !== null && typeof item === "object" && !Array.isArray(item)
            ? handle(model, item as Record<string, unknown>)
            : errorResponse("bad-request", "item must be an object"),
        ),
      };
    }
    default:
      return errorResponse("bad-request", `unknown kind ${typeof kind === "string" ? `'${kind}'` : JSON.stringify(kind)}`);
  }
}

/** Full response line (with echoed id) for one raw input line. */
export function respondToLine(model: TabularModel, line: string): string | null {
  const trimmed = line.trim();
  if (trimmed === "") return null;
  let req: unknown;
  try {
    req = JSON.parse(trimmed);
  } catch {
    return JSON.stringify({ id: null, ...errorResponse("bad-request", "unparseable line") });
  }
  if (req === null || typeof req !== "object" || Array.isArray(req)) {
    return JSON.stringify({ id: null, ...errorResponse("bad-request", "messages must be JSON objects") });
  }
  const message = req as Record<string, unknown>;
  const id = "id" in message ? message["id"] : null;
  return JSON.stringify({ id, ...handle(model, message) });
}
