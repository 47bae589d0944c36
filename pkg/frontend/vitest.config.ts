import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 3_600_000, // training tests are slow on the wasm backend
    hookTimeout: 600_000,
    fileParallelism: false, // one tf runtime at a time
    watch: false,
  },
});
