"""Named 3D model landmarks with a left/right symmetry map."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError

N_SKULL_LANDMARKS = 33
N_SKULL_PAIRS = 13


@dataclass(frozen=True, eq=False)
class LandmarkSet3D:
    """Model-frame landmark coordinates (mm) and symmetric index pairs."""

    points: np.ndarray
    symmetric_pairs: tuple[tuple[int, int], ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise ValueError("landmark points must be a finite (n, 3) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        pairs = tuple((int(a), int(b)) for a, b in self.symmetric_pairs)
        used = [i for pair in pairs for i in pair]
        if len(set(used)) != len(used):
            raise ValueError("symmetric pairs must be disjoint")
        if any(i < 0 or i >= len(pts) for i in used):
            raise ValueError("symmetric pair index out of range")
        object.__setattr__(self, "symmetric_pairs", pairs)
        names = tuple(self.names) or tuple(f"lm{i:02d}" for i in range(len(pts)))
        if len(names) != len(pts) or len(set(names)) != len(names):
            raise ValueError("landmark names must be unique, one per point")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_skull_configuration(self) -> bool:
        return len(self) == N_SKULL_LANDMARKS and len(self.symmetric_pairs) == N_SKULL_PAIRS


def format_landmarks(lms: LandmarkSet3D, header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append("# landmark <index> <name> <x_mm> <y_mm> <z_mm>; pair <index> <index>")
    for i, (name, p) in enumerate(zip(lms.names, lms.points)):
        lines.append(f"landmark {i} {name} " + " ".join(repr(float(c)) for c in p))
    for a, b in lms.symmetric_pairs:
        lines.append(f"pair {a} {b}")
    return "\n".join(lines) + "\n"


def parse_landmarks(text: str) -> LandmarkSet3D:
    rows: dict[int, tuple[str, list[float]]] = {}
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "landmark" and len(parts) == 6:
                rows[int(parts[1])] = (parts[2], [float(x) for x in parts[3:]])
            elif parts[0] == "pair" and len(parts) == 3:
                pairs.append((int(parts[1]), int(parts[2])))
            else:
                raise ValueError(f"unrecognised record {raw!r}")
        except ValueError as exc:
            raise ParseError(f"landmark file line {lineno}: {exc}") from None
    if sorted(rows) != list(range(len(rows))):
        raise ParseError("landmark indices must be 0..n-1 without gaps")
    order = range(len(rows))
    try:
        return LandmarkSet3D(
            points=np.array([rows[i][1] for i in order]).reshape(-1, 3),
            symmetric_pairs=tuple(pairs),
            names=tuple(rows[i][0] for i in order),
        )
    except ValueError as exc:
        raise ParseError(f"invalid landmark set: {exc}") from None


def load_landmarks(path: str | Path) -> LandmarkSet3D:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read landmark file {path}: {exc}") from None
    return parse_landmarks(text)


def save_landmarks(lms: LandmarkSet3D, path: str | Path, header: Sequence[str] = ()) -> None:
    Path(path).write_text(format_landmarks(lms, header))
