import { defineConfig } from 'vitest/config';

// The thread pool can stall in constrained sandboxes; a single forked worker
// keeps runs deterministic everywhere.
export default defineConfig({
  test: {
    pool: 'threads',
    poolOptions: { threads: { singleThread: true } },
    testTimeout: 15000,
    hookTimeout: 15000,
  },
});
