// Density grid -> pixels. Solid material (rho = 1) renders dark, void
// light, matching the printed figures; y increases upward, so grid row 0
// lands at the bottom of the image.

export function gridToImage(data: Float32Array, nx: number,
                            ny: number): Uint8ClampedArray<ArrayBuffer> {
  if (data.length !== nx * ny) {
    throw new Error(`grid size ${data.length} does not match ${nx}x${ny}`);
  }
  const out = new Uint8ClampedArray(new ArrayBuffer(4 * nx * ny));
  for (let row = 0; row < ny; row++) {
    const y = ny - 1 - row; // flip: image rows top-down
    for (let x = 0; x < nx; x++) {
      const rho = Math.min(1, Math.max(0, data[y * nx + x]));
      const v = Math.floor(255 * (1 - rho) + 0.5);
      const o = 4 * (row * nx + x);
      out[o] = out[o + 1] = out[o + 2] = v;
      out[o + 3] = 255;
    }
  }
  return out;
}

/** Nearest-neighbor upscale onto the canvas. */
export function drawHeatmap(canvas: HTMLCanvasElement, data: Float32Array,
                            nx: number, ny: number): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  const img = new ImageData(gridToImage(data, nx, ny), nx, ny);
  const off = document.createElement("canvas");
  off.width = nx;
  off.height = ny;
  off.getContext("2d")!.putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

/** Extract an axis-aligned z slice from a 3D grid (x fastest). */
export function sliceZ(data: Float32Array, nx: number, ny: number,
                       nz: number, z: number): Float32Array {
  if (z < 0 || z >= nz) throw new Error(`slice ${z} out of range 0..${nz - 1}`);
  const out = new Float32Array(nx * ny);
  for (let y = 0; y < ny; y++) {
    for (let x = 0; x < nx; x++) {
      // service payload is the transposed grid: z-major, then y, then x
      out[y * nx + x] = data[(z * ny + y) * nx + x];
    }
  }
  return out;
}
