/**
 * Backend selection: the WASM backend is considerably faster than the
 * pure-JS CPU backend for recurrent stacks; a single worker thread keeps
 * results bit-reproducible.  Falls back to the JS backend when WASM is
 * unavailable.
 */

import * as tf from "@tensorflow/tfjs";

export async function initBackend(preferred: "wasm" | "cpu" = "wasm"): Promise<string> {
  if (preferred === "wasm") {
    try {
      const wasm = await import("@tensorflow/tfjs-backend-wasm");
      wasm.setThreadsCount(1);
      if (await tf.setBackend("wasm")) {
        await tf.ready();
        return tf.getBackend();
      }
    } catch {
      // fall through to the default JS backend
    }
  }
  await tf.setBackend("cpu");
  await tf.ready();
  return tf.getBackend();
}

/** The wasm backend lacks conv training kernels; recurrent nets run fine. */
export function backendFor(method: string): "wasm" | "cpu" {
  return method === "cnn" ? "cpu" : "wasm";
}
