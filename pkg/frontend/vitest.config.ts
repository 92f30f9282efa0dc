import { defineConfig } from "vitest/config";

// The integration suite boots a real gateway process and paces speech against
// the wall clock, so both timeouts stay well above the interactive defaults.
export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
