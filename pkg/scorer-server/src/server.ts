#!/usr/bin/env node
/**
 * Reference pragma-score v1 scoring server.
 *
 * Serves a pragma-tabular v1 model file over stdio (default) or TCP.
 * Never crashes on malformed input: bad lines get an error response and
 * the connection stays open.
 *
 * Wrapping a real model: implement the TabularModel scoring surface
 * (nextTokenLogprobs over the full target vocabulary with log-sum-exp 0
 * within 1e-6, and a chain-rule-consistent sequenceLogprob) around your
 * backend and pass it to `serve`. The protocol layer is agnostic to
 * where the numbers come from.
 */

import * as net from "net";
import * as readline from "readline";

import { loadTabular, TabularModel } from "./tabular";
import { respondToLine } from "./protocol";

interface Args {
  modelPath: string;
  transport: "stdio" | "tcp";
  port: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { modelPath: "", transport: "stdio", port: 0 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--transport" && argv[i + 1]) {
      const value = argv[++i];
      if (value !== "stdio" && value !== "tcp") {
        usage(`unknown transport '${value}'`);
      }
      args.transport = value as "stdio" | "tcp";
    } else if (arg === "--port" && argv[i + 1]) {
      args.port = parseInt(argv[++i], 10);
    } else if (arg === "--help" || arg === "-h") {
      usage();
    } else if (!arg.startsWith("--") && args.modelPath === "") {
      args.modelPath = arg;
    } else {
      usage(`unexpected argument '${arg}'`);
    }
  }
  if (args.modelPath === "") usage("a model file path is required");
  return args;
}

function usage(error?: string): never {
  if (error) console.error(`error: ${error}`);
  console.error("usage: pragma-score-server <model.tab> [--transport stdio|tcp] [--port N]");
  process.exit(error ? 2 : 0);
}

function serveStdio(model: TabularModel): void {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    const response = respondToLine(model, line);
    if (response !== null) process.stdout.write(response + "\n");
  });
}

function serveTcp(model: TabularModel, port: number): void {
  // One connection at a time: the reference implementation favors
  // auditability over throughput.
  const server = net.createServer({ noDelay: true }, (socket) => {
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      const response = respondToLine(model, line);
      if (response !== null) socket.write(response + "\n");
    });
    socket.on("error", () => socket.destroy());
  });
  server.maxConnections = 1;
  server.listen(port, "127.0.0.1", () => {
    const address = server.address() as net.AddressInfo;
    console.error(`listening ${address.port}`);
  });
}

export function serve(model: TabularModel, transport: "stdio" | "tcp", port = 0): void {
  if (transport === "stdio") {
    serveStdio(model);
  } else {
    serveTcp(model, port);
  }
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  let model: TabularModel;
  try {
    model = loadTabular(args.modelPath);
  } catch (exc) {
    console.error(`error: ${exc instanceof Error ? exc.message : exc}`);
    process.exit(1);
  }
  serve(model, args.transport, args.port);
}

if (require.main === module) {
  main();
}
