import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration test builds a corpus and runs the pipeline first
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
