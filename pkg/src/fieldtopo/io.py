"""Checkpoint container, YAML problem configs, and field exports.

Checkpoint files are a JSON header (architectures, problem, metadata)
followed by the network parameters as little-endian float32, layer-ordered.
The 64->32-bit quantization happens exactly once: load(save(c)) reproduces
the stored parameters bitwise from then on.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import platform
import struct
import sys
from pathlib import Path

import numpy as np
import yaml

from . import problems
from .density import Material
from .elasticity import (
    AxisPlane,
    BoundaryConditions,
    CircleBoundary,
    DirichletRegion,
    DistributedLoad,
    PointAnchor,
    PointLoad,
)
from .networks import FourierFeature, MlpArchitecture, NetworkParams, Relu, Siren
from .problems import ProblemSpec
from .sampling import DomainSpec, ExcludedRegion
from .trainer import SolutionSpaceSpec, TrainConfig

FORMAT_VERSION = 1
_MAGIC = b"FTC1"


class ConfigError(ValueError):
    """Raised with a field-precise message for malformed configs."""


# -- dataclass <-> dict ------------------------------------------------------

_GEOMETRY_TYPES = {"axis_plane": AxisPlane, "point_anchor": PointAnchor,
                   "circle": CircleBoundary}


def _geometry_to_dict(geom) -> dict:
    for name, cls in _GEOMETRY_TYPES.items():
        if isinstance(geom, cls):
            return {"type": name, **dataclasses.asdict(geom)}
    raise TypeError(f"unknown boundary geometry {type(geom)}")


def _geometry_from_dict(d: dict, where: str):
    d = dict(d)
    kind = d.pop("type", None)
    cls = _GEOMETRY_TYPES.get(kind)
    if cls is None:
        raise ConfigError(f"{where}.type: expected one of {sorted(_GEOMETRY_TYPES)}, got {kind!r}")
    return _build_dataclass(cls, d, where)


def _build_dataclass(cls, d: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def problem_to_dict(p: ProblemSpec) -> dict:
    return {
        "name": p.name,
        "domain": {
            "lo": list(p.domain.lo),
            "hi": list(p.domain.hi),
            "excluded": [dataclasses.asdict(r) for r in p.domain.excluded],
        },
        "dirichlet": [
            {"geometry": _geometry_to_dict(r.geometry),
             **({"value": list(r.value)} if r.value else {}),
             **({"components": list(r.components)} if r.components is not None else {})}
            for r in p.bcs.regions
        ],
        "loads": [_load_to_dict(ld) for ld in p.loads],
        "material": dataclasses.asdict(p.material),
        "volume_fraction": p.target_volume,
        "grid": list(p.grid_dims),
    }


def _load_to_dict(load) -> dict:
    if isinstance(load, PointLoad):
        return {"type": "point", "location": list(load.location), "force": list(load.force)}
    if isinstance(load, DistributedLoad):
        return {"type": "distributed", "start": list(load.start), "end": list(load.end),
                "traction": list(load.traction), "samples": load.samples}
    raise TypeError(f"unknown load type {type(load)}")


def _load_from_dict(d: dict, where: str):
    d = dict(d)
    kind = d.pop("type", None)
    if kind == "point":
        return _build_dataclass(PointLoad, d, where)
    if kind == "distributed":
        return _build_dataclass(DistributedLoad, d, where)
    raise ConfigError(f"{where}.type: expected 'point' or 'distributed', got {kind!r}")


def problem_from_dict(d: dict, where: str = "problem") -> ProblemSpec:
    allowed = {"name", "domain", "dirichlet", "loads", "material", "volume_fraction", "grid"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    for key in ("name", "domain", "dirichlet", "loads"):
        if key not in d:
            raise ConfigError(f"{where}.{key}: required")
    dom = dict(d["domain"])
    excluded = tuple(
        _build_dataclass(ExcludedRegion, r, f"{where}.domain.excluded[{i}]")
        for i, r in enumerate(dom.pop("excluded", []))
    )
    domain = _build_dataclass(DomainSpec, {**dom, "excluded": ()}, f"{where}.domain")
    domain = dataclasses.replace(domain, excluded=excluded)
    regions = []
    for i, r in enumerate(d["dirichlet"]):
        r = dict(r)
        if "geometry" not in r:
            raise ConfigError(f"{where}.dirichlet[{i}].geometry: required")
        geom = _geometry_from_dict(r.pop("geometry"), f"{where}.dirichlet[{i}].geometry")
        regions.append(_build_dataclass(DirichletRegion, {"geometry": geom, **r},
                                        f"{where}.dirichlet[{i}]"))
    loads = tuple(_load_from_dict(ld, f"{where}.loads[{i}]") for i, ld in enumerate(d["loads"]))
    material = _build_dataclass(Material, d.get("material", {}), f"{where}.material")
    return ProblemSpec(
        d["name"], domain, BoundaryConditions(tuple(regions)), loads,
        material=material,
        target_volume=d.get("volume_fraction", 0.5),
        grid_dims=tuple(d.get("grid", (150, 50) if domain.dim == 2 else (80, 40, 20))),
    )


def _arch_to_dict(net: NetworkParams) -> dict:
    act = net.arch.activation
    if isinstance(act, Siren):
        activation = {"type": "siren", "omega0": act.omega0}
    elif isinstance(act, Relu):
        activation = {"type": "relu"}
    elif isinstance(act, FourierFeature):
        activation = {"type": "fourier", "feature_count": act.feature_count, "scale": act.scale}
    else:
        raise TypeError(f"unknown activation {type(act)}")
    return {
        "input_dim": net.arch.input_dim,
        "hidden_dim": net.arch.hidden_dim,
        "output_dim": net.arch.output_dim,
        "hidden_layers": net.arch.hidden_layers,
        "residual": net.arch.residual,
        "activation": activation,
        "seed": net.seed,
        "has_fourier_matrix": net.fourier_matrix is not None,
    }


def _arch_from_dict(d: dict) -> MlpArchitecture:
    act = d["activation"]
    if act["type"] == "siren":
        activation = Siren(act["omega0"])
    elif act["type"] == "relu":
        activation = Relu()
    elif act["type"] == "fourier":
        activation = FourierFeature(act["feature_count"], act["scale"])
    else:
        raise ValueError(f"unknown activation type {act['type']!r}")
    return MlpArchitecture(d["input_dim"], d["hidden_dim"], d["output_dim"],
                           d["hidden_layers"], activation, d["residual"])


# -- checkpoint container ----------------------------------------------------


@dataclasses.dataclass
class Checkpoint:
    problem: ProblemSpec
    disp_net: NetworkParams
    dens_net: NetworkParams
    space: SolutionSpaceSpec | None = None
    metadata: dict = dataclasses.field(default_factory=dict)
    version: int = FORMAT_VERSION


def _net_tensors(net: NetworkParams) -> list[np.ndarray]:
    tensors = list(net.parameter_tensors())
    if net.fourier_matrix is not None:
        tensors.append(net.fourier_matrix)
    return tensors


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "version": ckpt.version,
        "problem": problem_to_dict(ckpt.problem),
        "disp_net": _arch_to_dict(ckpt.disp_net),
        "dens_net": _arch_to_dict(ckpt.dens_net),
        "space": None if ckpt.space is None else dataclasses.asdict(ckpt.space),
        "metadata": ckpt.metadata,
    }
    payload = b"".join(
        np.ascontiguousarray(t, dtype="<f4").tobytes()
        for net in (ckpt.disp_net, ckpt.dens_net)
        for t in _net_tensors(net)
    )
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(payload)


def _read_net(header: dict, payload: bytes, offset: int) -> tuple[NetworkParams, int]:
    arch = _arch_from_dict(header)
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_dims():
        w, offset = _take(payload, offset, (fan_in, fan_out))
        b, offset = _take(payload, offset, (fan_out,))
        weights.append(w)
        biases.append(b)
    fourier = None
    if header["has_fourier_matrix"]:
        fourier, offset = _take(
            payload, offset, (arch.activation.feature_count, arch.input_dim))
    return NetworkParams(arch, weights, biases, header["seed"], fourier), offset


def _take(payload: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + 4 * count
    if end > len(payload):
        raise ValueError("checkpoint payload shorter than the architectures imply")
    arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
    return arr.astype(np.float64).reshape(shape), end


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (head_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(head_len))
        payload = f.read()
    if header["version"] != FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format version {header['version']} unsupported "
            f"(this build reads version {FORMAT_VERSION})")
    problem = problem_from_dict(header["problem"])
    disp_net, offset = _read_net(header["disp_net"], payload, 0)
    dens_net, offset = _read_net(header["dens_net"], payload, offset)
    if offset != len(payload):
        raise ValueError("checkpoint payload longer than the architectures imply")
    space = None
    if header["space"] is not None:
        sd = {k: tuple(v) if isinstance(v, list) else v for k, v in header["space"].items()}
        space = SolutionSpaceSpec(**sd)
    return Checkpoint(problem, disp_net, dens_net, space, header["metadata"],
                      header["version"])


# -- problem configs ---------------------------------------------------------


@dataclasses.dataclass
class ProblemConfig:
    problem: ProblemSpec
    trainer: TrainConfig
    space: SolutionSpaceSpec | None
    output: str


_TOP_KEYS = {"problem", "grid", "volume_fraction", "material", "trainer", "space", "output"}


def load_config(path) -> ProblemConfig:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    if "problem" not in doc:
        raise ConfigError(f"{path}: problem: required")

    prob = doc["problem"]
    if isinstance(prob, str):
        factory = problems.CANONICAL_SUITE.get(prob)
        if factory is None:
            raise ConfigError(
                f"problem: unknown canonical problem {prob!r}; "
                f"choose from {sorted(problems.CANONICAL_SUITE)} or inline a mapping")
        spec = factory()
    elif isinstance(prob, dict):
        spec = problem_from_dict(prob)
    else:
        raise ConfigError("problem: must be a canonical name or a mapping")
    if "grid" in doc:
        spec = spec.with_grid(tuple(doc["grid"]))
    if "volume_fraction" in doc:
        spec = spec.with_volume(float(doc["volume_fraction"]))
    if "material" in doc:
        material = _build_dataclass(Material, doc["material"], "material")
        spec = dataclasses.replace(spec, material=material)

    tcfg = doc.get("trainer", {})
    if "oc" in tcfg:
        raise ConfigError("trainer.oc: optimality-criterion internals are not configurable")
    trainer_cfg = _build_dataclass(TrainConfig, tcfg, "trainer")
    space = None
    if "space" in doc:
        sd = dict(doc["space"])
        space = _build_dataclass(SolutionSpaceSpec, sd, "space")
    return ProblemConfig(spec, trainer_cfg, space, doc.get("output", "runs/" + spec.name))


# -- exports ------------------------------------------------------------------


def export_density_pgm(grid: np.ndarray, path) -> None:
    """2D density grid (nx, ny) -> 8-bit PGM, solid material rendered black.

    Pixel value is floor(255 * (1 - rho) + 0.5): the half-way case rounds up,
    so rho = 0.5 maps to 128.
    """
    if grid.ndim != 2:
        raise ValueError(f"PGM export needs a 2D grid, got shape {grid.shape}")
    pix = np.floor(255.0 * (1.0 - np.clip(grid, 0.0, 1.0)) + 0.5).astype(np.uint8)
    rows = pix.T[::-1]  # image rows top-down, y increases upward
    with open(path, "wb") as f:
        f.write(f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode())
        f.write(rows.tobytes())


def export_density_raw(grid: np.ndarray, domain: DomainSpec, path) -> None:
    """Raw little-endian f32 volume, x fastest; sidecar .meta text header."""
    path = Path(path)
    np.ascontiguousarray(grid.T, dtype="<f4").tofile(path)
    meta = path.with_suffix(path.suffix + ".meta")
    dims = " ".join(str(n) for n in grid.shape)
    lo = " ".join(repr(float(v)) for v in domain.lo)
    hi = " ".join(repr(float(v)) for v in domain.hi)
    meta.write_text(f"dims {dims}\nlo {lo}\nhi {hi}\ndtype <f4\norder x-fastest\n")


def export_history(history: list[dict], path) -> None:
    with open(path, "w") as f:
        for record in history:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def write_manifest(path, config_path, seed: int, extra: dict | None = None) -> None:
    """Reproducibility record: config hash, seed, and library versions."""
    from . import __version__

    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "config": str(config_path),
        "config_sha256": digest,
        "seed": seed,
        "argv": sys.argv[1:],
        "versions": {
            "fieldtopo": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
