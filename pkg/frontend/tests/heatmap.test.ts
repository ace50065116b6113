import { describe, expect, it } from "vitest";
import { gridToImage, sliceZ } from "../src/heatmap.js";
import { parseInferResponse } from "../src/api.js";

describe("gridToImage", () => {
  it("renders a constant 0.5 grid as uniform mid-gray", () => {
    const img = gridToImage(new Float32Array([0.5, 0.5, 0.5, 0.5]), 2, 2);
    for (let i = 0; i < 16; i += 4) {
      expect(img[i]).toBe(128); // floor(255 * 0.5 + 0.5)
      expect(img[i + 3]).toBe(255);
    }
  });

  it("renders rho=0 light and rho=1 dark, left to right", () => {
    const img = gridToImage(new Float32Array([0, 1]), 2, 1);
    expect(img[0]).toBe(255); // left pixel light
    expect(img[4]).toBe(0);   // right pixel dark
  });

  it("puts grid row y=0 at the bottom of the image", () => {
    // 1x2 grid: bottom cell solid, top cell void
    const img = gridToImage(new Float32Array([1, 0]), 1, 2);
    expect(img[0]).toBe(255); // image row 0 (top) = y max = void
    expect(img[4]).toBe(0);   // image row 1 (bottom) = y 0 = solid
  });

  it("rejects mismatched dimensions", () => {
    expect(() => gridToImage(new Float32Array(3), 2, 2)).toThrow();
  });
});

describe("sliceZ", () => {
  it("extracts the requested z plane from z-major data", () => {
    // nx=2, ny=1, nz=2; payload order (z, y, x)
    const data = new Float32Array([0.1, 0.2, 0.3, 0.4]);
    expect(Array.from(sliceZ(data, 2, 1, 2, 0))).toEqual(
      [new Float32Array([0.1])[0], new Float32Array([0.2])[0]]);
    expect(Array.from(sliceZ(data, 2, 1, 2, 1))).toEqual(
      [new Float32Array([0.3])[0], new Float32Array([0.4])[0]]);
    expect(() => sliceZ(data, 2, 1, 2, 2)).toThrow();
  });
});

describe("parseInferResponse", () => {
  it("decodes dims, volume, q and warning from headers", () => {
    const body = new Float32Array([0.25, 0.75]).buffer;
    const headers = new Headers({
      "X-Grid-Dims": "2x1",
      "X-Volume": "0.500000",
      "X-Q": "0.42",
      "X-Warning": "q clamped to trained range [0.3, 0.7]",
    });
    const r = parseInferResponse(body, headers);
    expect(r.dims).toEqual([2, 1]);
    expect(r.volume).toBeCloseTo(0.5);
    expect(r.q).toBeCloseTo(0.42);
    expect(r.warning).toContain("clamped");
    expect(Array.from(r.data)).toEqual([0.25, 0.75]);
  });

  it("rejects size mismatches and bad headers", () => {
    const body = new Float32Array([1, 2, 3]).buffer;
    expect(() => parseInferResponse(body, new Headers({ "X-Grid-Dims": "2x1" })))
      .toThrow(/expected/);
    expect(() => parseInferResponse(body, new Headers({ "X-Grid-Dims": "0x3" })))
      .toThrow(/X-Grid-Dims/);
  });
});
