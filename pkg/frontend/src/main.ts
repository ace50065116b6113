import { fetchMeta, infer, InferResult, Meta } from "./api.js";
import { ExplorerController } from "./controller.js";
import { drawHeatmap, sliceZ } from "./heatmap.js";

const $ = (id: string) => document.getElementById(id)!;

function resolutionFor(meta: Meta): number[] {
  return meta.domain.lo.length === 3 ? [96, 48, 24] : [300, 100];
}

function showToast(message: string): void {
  const toast = $("toast");
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 4000);
}

async function boot(): Promise<void> {
  let meta: Meta;
  try {
    meta = await fetchMeta();
  } catch (e) {
    showToast(`service unreachable: ${e}`);
    return;
  }
  const [lo, hi] = meta.range;
  const resolution = resolutionFor(meta);
  const is3d = resolution.length === 3;
  const canvas = $("view") as HTMLCanvasElement;
  const slider = $("q") as HTMLInputElement;
  const zslider = $("z") as HTMLInputElement;
  slider.min = String(lo);
  slider.max = String(hi);
  slider.step = String((hi - lo) / 200);
  slider.value = String(0.5 * (lo + hi));
  $("q-label").textContent = meta.parameter_kind.replace("_", " ");
  if (is3d) {
    $("z-row").style.display = "";
    zslider.max = String(resolution[2] - 1);
    zslider.value = String(Math.floor(resolution[2] / 2));
  }

  let last: InferResult | null = null;
  const redraw = () => {
    if (!last) return;
    const [nx, ny] = last.dims;
    const plane = is3d
      ? sliceZ(last.data, nx, ny, last.dims[2], Number(zslider.value))
      : last.data;
    drawHeatmap(canvas, plane, nx, ny);
  };

  const controller = new ExplorerController(
    { infer, resolution },
    {
      render(result) {
        last = result;
        // readout is the service-reported value verbatim
        $("volume").textContent = result.volume.toFixed(6);
        $("q-value").textContent = result.q.toFixed(3);
        $("warning").textContent = result.warning ?? "";
        redraw();
      },
      onError: showToast,
    },
  );

  slider.addEventListener("input", () => controller.onSlider(Number(slider.value)));
  zslider.addEventListener("input", redraw);
  controller.request(Number(slider.value));
}

boot();
