// Thin client for the explorer service. No state; every call is a plain
// fetch against the HTTP contract.

export interface Meta {
  parameter_kind: string;
  range: [number, number];
  domain: { lo: number[]; hi: number[] };
  problem: unknown;
  metadata: Record<string, unknown>;
}

export interface InferResult {
  /** densities, row-major with x fastest: data[y * dims[0] + x] */
  data: Float32Array;
  /** grid dimensions [nx, ny] (or [nx, ny, nz] for 3D checkpoints) */
  dims: number[];
  volume: number;
  q: number;
  warning: string | null;
}

export async function fetchMeta(base = ""): Promise<Meta> {
  const r = await fetch(`${base}/api/meta`);
  if (!r.ok) throw new Error(`meta request failed: ${r.status}`);
  return (await r.json()) as Meta;
}

export function parseInferResponse(body: ArrayBuffer,
                                   headers: Headers): InferResult {
  const dims = (headers.get("X-Grid-Dims") ?? "").split("x").map(Number);
  if (dims.some((d) => !Number.isFinite(d) || d <= 0)) {
    throw new Error(`bad X-Grid-Dims header: ${headers.get("X-Grid-Dims")}`);
  }
  const expected = dims.reduce((a, b) => a * b, 1);
  const data = new Float32Array(body);
  if (data.length !== expected) {
    throw new Error(`payload has ${data.length} values, expected ${expected}`);
  }
  return {
    data,
    dims,
    volume: Number(headers.get("X-Volume")),
    q: Number(headers.get("X-Q")),
    warning: headers.get("X-Warning"),
  };
}

export async function infer(q: number, resolution: number[],
                            base = ""): Promise<InferResult> {
  const r = await fetch(`${base}/api/infer`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ q, resolution, encoding: "raw" }),
  });
  if (!r.ok) throw new Error(`infer request failed: ${r.status}`);
  return parseInferResponse(await r.arrayBuffer(), r.headers);
}
