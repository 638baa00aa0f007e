"""``key=value`` configuration files.

Recognised keys (all optional)::

    material.kind = neo-hooke | linear-elastic
    material.E    = 1000
    material.nu   = 0.25
    rve.n_voxels  = 8
    rve.L         = 2.0
    rve.pores     = 0.7,0.7,0.7,0.667; 1.3,1.3,1.2,0.667   (empty for none)
    sampling.n_paths, sampling.n_steps, sampling.dF_lp, sampling.dF_ls
    seed          = 0
"""

from dataclasses import dataclass

from .errors import ConfigError
from .mesh import DEFAULT_PORES
from .sampling import DEFAULT_DF_LP, DEFAULT_DF_LS, DEFAULT_STEPS
from .store import read_manifest
from .voigt import Material


@dataclass
class Config:
    material: Material = Material()
    n_voxels: int = 8
    L: float = 2.0
    pores: tuple = DEFAULT_PORES
    n_paths: int = 20
    n_steps: int = DEFAULT_STEPS
    dF_lp: float = DEFAULT_DF_LP
    dF_ls: float = DEFAULT_DF_LS
    seed: int = 0


def _pores(text):
    text = text.strip()
    if not text:
        return ()
    out = []
    for chunk in text.split(";"):
        vals = [float(v) for v in chunk.split(",")]
        if len(vals) != 4:
            raise ConfigError(f"pore needs x,y,z,r: {chunk!r}")
        out.append(tuple(vals))
    return tuple(out)


_FIELDS = {
    "rve.n_voxels": ("n_voxels", int),
    "rve.L": ("L", float),
    "rve.pores": ("pores", _pores),
    "sampling.n_paths": ("n_paths", int),
    "sampling.n_steps": ("n_steps", int),
    "sampling.dF_lp": ("dF_lp", float),
    "sampling.dF_ls": ("dF_ls", float),
    "seed": ("seed", int),
}


def parse_config(entries):
    cfg = Config()
    mat = {"kind": cfg.material.kind, "E": cfg.material.E, "nu": cfg.material.nu}
    for key, raw in entries.items():
        try:
            if key.startswith("material."):
                name = key.split(".", 1)[1]
                if name not in mat:
                    raise ConfigError(f"unknown key {key!r}")
                mat[name] = raw if name == "kind" else float(raw)
            elif key in _FIELDS:
                attr, conv = _FIELDS[key]
                setattr(cfg, attr, conv(raw))
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    cfg.material = Material(**mat)
    return cfg


def load_config(path=None):
    if path is None:
        return Config()
    try:
        return parse_config(read_manifest(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
