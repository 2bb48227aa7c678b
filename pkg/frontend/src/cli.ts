/**
 * Command line for the sequence-model baselines.
 *
 *   node dist/cli.js --export prep/sequences_packet.jsonl --split corpus/split.json \
 *       --task detection --methods gru,lstm,cnn --modality packet --out results.jsonl
 */

import * as path from "node:path";

import { backendFor, initBackend } from "./backend.js";
import { buildDataset, Task } from "./data.js";
import { DEFAULT_SPEC, Method, TrainSpec } from "./models.js";
import { ResultsRecord, loadSequences, loadSplit, writeResults } from "./schema.js";
import { trainEval } from "./train.js";

interface Args {
  export: string;
  split: string;
  out: string;
  task: Task;
  methods: Method[];
  modality: string;
  epochs?: number;
  units?: number;
  batchSize?: number;
  learningRate?: number;
  seed?: number;
}

function parseArgs(argv: string[]): Args {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near '${key}'`);
    }
    out[key.slice(2)] = argv[i + 1];
  }
  for (const required of ["export", "split", "out"]) {
    if (!(required in out)) throw new Error(`missing required --${required}`);
  }
  return {
    export: out.export,
    split: out.split,
    out: out.out,
    task: (out.task ?? "detection") as Task,
    methods: (out.methods ?? "gru").split(",") as Method[],
    modality: out.modality ?? inferModality(out.export),
    epochs: out.epochs ? Number(out.epochs) : undefined,
    units: out.units ? Number(out.units) : undefined,
    batchSize: out["batch-size"] ? Number(out["batch-size"]) : undefined,
    learningRate: out["learning-rate"] ? Number(out["learning-rate"]) : undefined,
    seed: out.seed ? Number(out.seed) : undefined,
  };
}

function inferModality(exportPath: string): string {
  const m = path.basename(exportPath).match(/sequences_(\w+)\.jsonl/);
  return m ? m[1] : "packet";
}

export async function main(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  const samples = loadSequences(args.export);
  const split = loadSplit(args.split);
  const records: ResultsRecord[] = [];
  for (const method of args.methods) {
    const train = buildDataset(samples, split.train, args.task);
    const test = buildDataset(samples, split.test, args.task, train.numClasses);
    const spec: TrainSpec = {
      method,
      length: train.length,
      width: train.width,
      numClasses: train.numClasses,
      units: args.units ?? DEFAULT_SPEC.units,
      epochs: args.epochs ?? DEFAULT_SPEC.epochs,
      batchSize: args.batchSize ?? DEFAULT_SPEC.batchSize,
      learningRate: args.learningRate ?? DEFAULT_SPEC.learningRate,
      seed: args.seed ?? DEFAULT_SPEC.seed,
    };
    const started = Date.now();
    console.log(`backend: ${await initBackend(backendFor(method))}`);
    const { metrics, losses } = trainEval(train, test, spec, args.task);
    records.push({
      method,
      modalities: [args.modality],
      task: args.task,
      ...metrics,
    });
    console.log(`${method} ${args.task} [${args.modality}] ` +
      `f1=${metrics.f1.toFixed(4)} acc=${metrics.accuracy.toFixed(4)} ` +
      `(final loss ${losses[losses.length - 1].toFixed(4)}, ${((Date.now() - started) / 1000).toFixed(0)}s)`);
  }
  writeResults(records, args.out);
  console.log(`wrote ${records.length} records to ${args.out}`);
  return 0;
}

main(process.argv.slice(2)).then((rc) => process.exit(rc)).catch((err) => {
  console.error(`error: ${err.message}`);
  process.exit(2);
});
