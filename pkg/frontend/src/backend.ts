/**
 * Backend selection: WASM when available (much faster convolutions),
 * plain CPU otherwise. Threads are pinned to one so runs stay
 * bit-reproducible.
 */

import * as tf from "@tensorflow/tfjs";
import { setThreadsCount } from "@tensorflow/tfjs-backend-wasm";

let ready: Promise<string> | null = null;

export function ensureBackend(): Promise<string> {
  if (!ready) {
    ready = (async () => {
      try {
        setThreadsCount(1);
        if (await tf.setBackend("wasm")) {
          await tf.ready();
          return "wasm";
        }
      } catch {
        // fall through to the pure-JS backend
      }
      await tf.setBackend("cpu");
      await tf.ready();
      return "cpu";
    })();
  }
  return ready;
}
