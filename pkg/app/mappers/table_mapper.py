from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import ArtifactError
from ..models.market import RiskNeutralSlice
from ..models.paths import PathBatch
from ..models.projection import LocalVolSurface

SLICE_COLUMNS = ("layer", "kind", "maturity", "forward", "x", "pdf", "cdf")


def _label(value: float) -> str:
    return repr(float(value))


class TableMapper:

    @staticmethod
    def to_slice_frame(slices: Sequence[Tuple[int, str, RiskNeutralSlice]]) -> pd.DataFrame:
        """One row per grid point of every (layer, kind, slice)"""
        frames = [
            pd.DataFrame({"layer": layer, "kind": kind, "maturity": s.maturity, "forward": s.forward,
                          "x": s.grid, "pdf": s.density, "cdf": s.cdf})
            for layer, kind, s in slices
        ]
        if not frames:
            return pd.DataFrame(columns=list(SLICE_COLUMNS))
        return pd.concat(frames, ignore_index=True)

    @staticmethod
    def from_slice_frame(frame: pd.DataFrame) -> Dict[Tuple[int, str], RiskNeutralSlice]:
        missing = [c for c in SLICE_COLUMNS if c not in frame.columns]
        if missing:
            raise ArtifactError(f"slice table lacks columns {missing}")
        slices = {}
        for (layer, kind), group in frame.groupby(["layer", "kind"], sort=False):
            slices[(int(layer), str(kind))] = RiskNeutralSlice(
                maturity=float(group["maturity"].iloc[0]), forward=float(group["forward"].iloc[0]),
                grid=group["x"].to_numpy(dtype=float), density=group["pdf"].to_numpy(dtype=float),
                cdf=group["cdf"].to_numpy(dtype=float),
            )
        return slices

    @staticmethod
    def to_surface_frame(surface: LocalVolSurface, as_variance: bool = False) -> pd.DataFrame:
        """Rows t, one column per x; local vol unless as_variance"""
        values = surface.variance if as_variance else surface.local_vol
        frame = pd.DataFrame(values, columns=[_label(x) for x in surface.x_grid])
        frame.insert(0, "t", surface.t_grid)
        return frame

    @staticmethod
    def from_surface_frame(frame: pd.DataFrame, as_variance: bool = False):
        """(t grid, x grid, local variance) back from a surface table"""
        if frame.columns.size < 2 or frame.columns[0] != "t":
            raise ArtifactError("surface table needs a leading 't' column and one column per x")
        try:
            x_grid = np.array([float(c) for c in frame.columns[1:]])
        except ValueError as e:
            raise ArtifactError(f"surface column labels must be prices: {e}") from e
        values = frame.iloc[:, 1:].to_numpy(dtype=float)
        return frame["t"].to_numpy(dtype=float), x_grid, values if as_variance else values ** 2

    @staticmethod
    def to_paths_frame(batch: PathBatch) -> pd.DataFrame:
        """One row per path: asset values at each time, then the hidden variance draws"""
        frame = pd.DataFrame(batch.values, columns=[_label(t) for t in batch.times])
        for j in range(batch.hidden.shape[1]):
            frame[f"hidden_{j}"] = batch.hidden[:, j]
        frame.insert(0, "path", np.arange(batch.paths))
        return frame
