import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // driver tests spawn a real study server and run whole sessions
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
