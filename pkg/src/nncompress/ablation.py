"""Feature-toggle ablations: train one model per configuration and compare WRMSE."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .artifact import make_artifact
from .decoder import stats
from .gridfield import GridField4D
from .network import ModelConfig
from .trainer import TrainConfig, train

COLUMNS = ("scaling", "gelu", "xyz", "fourier", "skip", "batchnorm")

# rows of the reference ablation table, as (scaling, gelu, xyz, fourier, skip, batchnorm)
TABLE_ROWS = {
    1: (0, 0, 0, 0, 0, 0),
    2: (1, 0, 0, 0, 0, 0),
    3: (1, 0, 1, 0, 0, 0),
    4: (1, 0, 1, 1, 0, 0),
    5: (1, 0, 0, 1, 0, 0),
    6: (1, 1, 0, 0, 0, 0),
    7: (1, 0, 1, 0, 1, 0),
    8: (1, 1, 1, 0, 1, 0),
    9: (1, 1, 1, 0, 1, 1),
    10: (1, 1, 1, 1, 1, 0),
    11: (1, 1, 1, 1, 1, 1),
}

NAMED = {
    "full": (1, 1, 1, 1, 1, 1),
    "no_scaling": (0, 1, 1, 1, 1, 1),
    "relu": (1, 0, 1, 1, 1, 1),
    "no_xyz": (1, 1, 0, 1, 1, 1),
    "no_fourier": (1, 1, 1, 0, 1, 1),
    "no_skip": (1, 1, 1, 1, 0, 1),
    "no_batchnorm": (1, 1, 1, 1, 1, 0),
}


@dataclass
class AblationRow:
    label: str
    flags: tuple
    wrmse: float


def resolve_rows(spec: str | None) -> list[tuple[str, tuple]]:
    """``"9,11,no_fourier"`` -> labelled flag tuples; ``None`` means all table rows."""
    if not spec:
        return [(str(k), v) for k, v in TABLE_ROWS.items()]
    out = []
    for item in (s.strip() for s in spec.split(",")):
        if not item:
            continue
        if item.isdigit() and int(item) in TABLE_ROWS:
            out.append((item, TABLE_ROWS[int(item)]))
        elif item in NAMED:
            out.append((item, NAMED[item]))
        else:
            raise ValueError(f"unknown ablation row {item!r}")
    if not out:
        raise ValueError("no ablation rows requested")
    return out


def apply_flags(mcfg: ModelConfig, flags: tuple) -> ModelConfig:
    scaling, gelu, xyz, fourier, skip, bn = (bool(f) for f in flags)
    return replace(mcfg, use_scaling=scaling, activation="gelu" if gelu else "relu", use_xyz=xyz,
                   use_fourier=fourier, use_skip=skip, use_batchnorm=bn)


def run_one(field: GridField4D, mcfg: ModelConfig, tcfg: TrainConfig, flags: tuple) -> float:
    result = train(field, apply_flags(mcfg, flags), tcfg)
    art = make_artifact(result, field, tcfg.digest())
    return stats(art, field).weighted_rmse


def run_ablation(field: GridField4D, mcfg: ModelConfig, tcfg: TrainConfig, rows) -> list[AblationRow]:
    return [AblationRow(label, flags, run_one(field, mcfg, tcfg, flags)) for label, flags in rows]


def format_report(rows: list[AblationRow]) -> str:
    lines = ["\t".join(("row",) + COLUMNS + ("wrmse",))]
    for r in rows:
        lines.append("\t".join([r.label] + [str(int(f)) for f in r.flags] + [repr(r.wrmse)]))
    return "\n".join(lines) + "\n"
