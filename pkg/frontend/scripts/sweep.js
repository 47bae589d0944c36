// Task-difficulty sweep: find a noise level where the trainability
// ordering (shared-source-dirac >= dirac >= skipless) separates cleanly.
// Usage: node scripts/sweep.js [sigma...]

const { ensureBackend } = require("../dist/backend");
const { syntheticTask } = require("../dist/dataset");
const { trainVariant } = require("../dist/train");

async function main() {
  console.log("backend:", await ensureBackend());
  const sigmas = process.argv.slice(2).map(Number);
  const list = sigmas.length ? sigmas : [1.4, 1.8];
  const epochs = Number(process.env.SWEEP_EPOCHS || 12);
  const perClass = Number(process.env.SWEEP_PER_CLASS || 100);
  for (const sigma of list) {
    for (const seed of [0, 1, 2]) {
      const task = syntheticTask({
        seed, noiseSigma: sigma, trainPerClass: perClass, testPerClass: 40,
      });
      const row = { sigma, seed };
      for (const variant of ["shared-source-dirac", "dirac", "skipless"]) {
        const t0 = Date.now();
        const res = trainVariant(variant, task, {
          epochs, batchSize: 50, learningRate: 1e-3, weightDecay: 0.01,
          optimizer: "adamw", seed, polyDegree: 8, baseChannels: 8,
        });
        row[variant] = res.finalTestAcc;
        row[variant + "_t"] = ((Date.now() - t0) / 1000).toFixed(0) + "s";
        const { disposeModel } = require("../dist/model");
        disposeModel(res.model);
      }
      const ok = row["shared-source-dirac"] >= row["dirac"] &&
                 row["dirac"] >= row["skipless"];
      console.log(JSON.stringify(row), ok ? "ORDERED" : "-");
    }
  }
}

main().catch((e) => { console.error(e); process.exit(1); });
