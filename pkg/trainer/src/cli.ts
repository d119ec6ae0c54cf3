/** Command line: pretrain on HN rasters, fine-tune, run the seed experiment. */

import * as fs from "fs";
import * as path from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { loadDataset } from "./data";
import { ToySegNet } from "./net";
import { DEFAULT_TRAIN, Mode, finetune, pretrainHN } from "./train";

function writeJson(p: string, doc: unknown): void {
  fs.mkdirSync(path.dirname(p), { recursive: true });
  fs.writeFileSync(p, JSON.stringify(doc, null, 2) + "\n");
}

export async function main(argv: string[]): Promise<number> {
  await yargs(argv)
    .command(
      "pretrain",
      "train the HN-label network",
      (y) =>
        y
          .option("manifest", { type: "string", demandOption: true })
          .option("hn-dir", { type: "string", demandOption: true })
          .option("classes", { type: "number", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("iters", { type: "number", default: DEFAULT_TRAIN.iters })
          .option("lr", { type: "number", default: DEFAULT_TRAIN.lr })
          .option("batch", { type: "number", default: DEFAULT_TRAIN.batchSize })
          .option("seed", { type: "number", default: 0 }),
      (args) => {
        const dataset = loadDataset(args.manifest, args.hnDir, null);
        const result = pretrainHN(dataset, args.classes, {
          ...DEFAULT_TRAIN,
          iters: args.iters,
          lr: args.lr,
          batchSize: args.batch,
          seed: args.seed,
        });
        fs.mkdirSync(path.dirname(args.out), { recursive: true });
        fs.writeFileSync(args.out, result.net.serialize());
        writeJson(args.out.replace(/\.json$/, "") + "_log.json", {
          loss_curve: result.curve,
          holdout_accuracy: result.holdoutAccuracy,
          per_class_accuracy: result.perClassAccuracy,
        });
        console.log(`holdout HN accuracy ${result.holdoutAccuracy.toFixed(4)}`);
      },
    )
    .command(
      "finetune",
      "transfer to semantic segmentation",
      (y) =>
        y
          .option("manifest", { type: "string", demandOption: true })
          .option("sem-dir", { type: "string", demandOption: true })
          .option("classes", { type: "number", demandOption: true })
          .option("mode", {
            choices: ["scratch", "full", "fixed_k", "cross_stitch"] as const,
            demandOption: true,
          })
          .option("init", { type: "string" })
          .option("fixed-k", { type: "number", default: 2 })
          .option("report", { type: "string", demandOption: true })
          .option("iters", { type: "number", default: 60 })
          .option("lr", { type: "number", default: DEFAULT_TRAIN.lr })
          .option("batch", { type: "number", default: DEFAULT_TRAIN.batchSize })
          .option("seed", { type: "number", default: 0 }),
      (args) => {
        const dataset = loadDataset(args.manifest, null, args.semDir);
        const init = args.init
          ? ToySegNet.deserialize(fs.readFileSync(args.init, "utf8"))
          : undefined;
        const result = finetune(
          dataset,
          { mode: args.mode as Mode, init, nClasses: args.classes, fixedK: args.fixedK },
          { ...DEFAULT_TRAIN, iters: args.iters, lr: args.lr, batchSize: args.batch, seed: args.seed },
        );
        writeJson(args.report, result.report);
        console.log(`${args.mode} mean IoU ${result.meanIou.toFixed(4)}`);
      },
    )
    .demandCommand(1)
    .strict()
    .parse();
  return 0;
}

if (require.main === module) {
  main(hideBin(process.argv)).then((code) => process.exit(code));
}
