"""Event bundles: domain types, validation, and the on-disk format.

A bundle is a directory holding one earthquake event: a JSON manifest plus
plain CSV matrices for every grid layer (hazard intensities, population per
income quantile, building counts, raw covariates).  Grids are stored as
2-D matrices and flattened row-major in memory; region definitions and
observations refer to flattened cell indices.  Covariates are stored raw,
with the corpus-level standardization constants kept in the manifest, and
standardized at load so train and test events share identical scaling.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleError
from .model import split_gnic
from .params import IMPACTS

FORMAT_VERSION = 1

# transform applied to each raw covariate before standardization
COVARIATE_TRANSFORMS = {
    "vs30": lambda x: np.log(x),
    "popdens": lambda x: np.log(x + 0.1),
    "shdi": lambda x: x,
    "gnic": lambda x: x,
    "eqfreq": lambda x: np.log(x + 0.001),
}
COVARIATE_NAMES = ("vs30", "popdens", "shdi", "gnic", "eqfreq")
N_QUANTILES = 8


@dataclass
class HazardInstance:
    """One earthquake shock: an intensity grid plus its timing flags."""

    intensity: np.ndarray          # (J,) MMI
    first_haz: int                 # 1 when the shock has no predecessor in the event
    night: int                     # 1 when the shock occurs between 10pm and 6am
    ordering_index: int

    def __post_init__(self):
        self.intensity = np.asarray(self.intensity, dtype=float).ravel()


@dataclass
class ExposureGrid:
    """Initial population per (cell, income quantile) and building counts."""

    pop: np.ndarray                # (J, 8) int64
    build: np.ndarray | None = None  # (J,) int64, optional layer

    def __post_init__(self):
        self.pop = np.asarray(self.pop, dtype=np.int64)
        if self.build is not None:
            self.build = np.asarray(self.build, dtype=np.int64).ravel()


@dataclass
class CovariateGrid:
    """Raw covariate layers plus the constants that standardize them."""

    raw: dict                      # name -> (J,) array
    income_shares: np.ndarray      # (8,) compacted decile shares, percentiles 10-90
    constants: dict                # name -> (mean, sd) applied after the transform

    vs30_std: np.ndarray = field(init=False, repr=False)
    popdens_std: np.ndarray = field(init=False, repr=False)
    shdi_std: np.ndarray = field(init=False, repr=False)
    eqfreq_std: np.ndarray = field(init=False, repr=False)
    gnic_q_std: np.ndarray = field(init=False, repr=False)  # (J, 8)

    def __post_init__(self):
        self.income_shares = np.asarray(self.income_shares, dtype=float).ravel()
        self._standardize()

    def _standardize(self):
        std = {}
        for name in COVARIATE_NAMES:
            if name not in self.raw:
                raise BundleError(f"covariate layer {name!r} missing")
            if name not in self.constants:
                raise BundleError(f"standardization constants missing for {name!r}")
            mean, sd = self.constants[name]
            if not (np.isfinite(mean) and np.isfinite(sd)) or sd <= 0:
                raise BundleError(f"standardization constants for {name!r} invalid: ({mean}, {sd})")
            values = np.asarray(self.raw[name], dtype=float).ravel()
            if name == "gnic":
                per_q = np.stack(
                    [split_gnic(values, self.income_shares, q) for q in range(N_QUANTILES)],
                    axis=1,
                )
                std[name] = (per_q - mean) / sd
            else:
                transformed = COVARIATE_TRANSFORMS[name](values)
                std[name] = (transformed - mean) / sd
            if not np.all(np.isfinite(std[name])):
                raise BundleError(f"standardized covariate {name!r} has non-finite values")
        self.vs30_std = std["vs30"]
        self.popdens_std = std["popdens"]
        self.shdi_std = std["shdi"]
        self.eqfreq_std = std["eqfreq"]
        self.gnic_q_std = std["gnic"]


@dataclass
class RegionMap:
    """Named sets of cell indices over which observations aggregate."""

    regions: dict                  # region id -> (n,) int cell indices
    is_partition: bool = False

    def __post_init__(self):
        self.regions = {k: np.asarray(v, dtype=np.int64).ravel() for k, v in self.regions.items()}

    def cells(self, region_id):
        try:
            return self.regions[region_id]
        except KeyError:
            raise BundleError(f"region {region_id!r} is not defined") from None


@dataclass(frozen=True)
class Observation:
    """One aggregated impact record."""

    region: str
    impact: str                    # 'mort' | 'disp' | 'builddam'
    value: int


@dataclass
class PointData:
    """Per-cell building damage assessments (point data), one row per cell."""

    cell: np.ndarray               # (K,) cell indices
    n_buildings: np.ndarray        # (K,)
    n_damaged: np.ndarray          # (K,)
    n_possible: np.ndarray         # (K,) 'possibly damaged' counts, excluded from rates
    max_intensity: np.ndarray      # (K,) max exposed MMI over hazards

    def __post_init__(self):
        for name in ("cell", "n_buildings", "n_damaged", "n_possible"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).ravel())
        self.max_intensity = np.asarray(self.max_intensity, dtype=float).ravel()


@dataclass
class EventBundle:
    """One earthquake event: hazards, exposure, covariates, regions, observations."""

    event_id: str
    shape: tuple                   # (rows, cols)
    georef: dict                   # origin_lon, origin_lat, cell_arcmin
    hazards: list                  # list[HazardInstance], sorted by ordering_index
    exposure: ExposureGrid
    covariates: CovariateGrid
    regions: RegionMap
    observations: list             # list[Observation]
    provenance: str = ""
    point_data: PointData | None = None

    @property
    def n_cells(self):
        return self.shape[0] * self.shape[1]

    def validate(self):
        """Check all bundle invariants; raises BundleError naming the field."""
        eid = self.event_id
        rows, cols = self.shape
        if rows < 1 or cols < 1:
            raise BundleError(f"{eid}: grid shape {self.shape} invalid")
        n = self.n_cells
        if not self.hazards:
            raise BundleError(f"{eid}: hazard list is empty")
        order = [h.ordering_index for h in self.hazards]
        if len(set(order)) != len(order):
            raise BundleError(f"{eid}: hazard ordering_index values not unique: {order}")
        for h in self.hazards:
            if h.intensity.shape != (n,):
                raise BundleError(
                    f"{eid}: hazard {h.ordering_index} intensity has {h.intensity.size} cells, grid has {n}"
                )
            if not np.all(np.isfinite(h.intensity)):
                raise BundleError(f"{eid}: hazard {h.ordering_index} intensity has non-finite values")
            if h.first_haz not in (0, 1) or h.night not in (0, 1):
                raise BundleError(f"{eid}: hazard {h.ordering_index} flags must be 0/1")
        if self.exposure.pop.shape != (n, N_QUANTILES):
            raise BundleError(
                f"{eid}: population must have shape ({n}, {N_QUANTILES}), got {self.exposure.pop.shape}"
            )
        if np.any(self.exposure.pop < 0):
            raise BundleError(f"{eid}: population counts must be non-negative")
        if self.exposure.build is not None:
            if self.exposure.build.shape != (n,):
                raise BundleError(f"{eid}: building layer has {self.exposure.build.size} cells, grid has {n}")
            if np.any(self.exposure.build < 0):
                raise BundleError(f"{eid}: building counts must be non-negative")
        for name in COVARIATE_NAMES:
            layer = np.asarray(self.covariates.raw[name]).ravel()
            if layer.shape != (n,):
                raise BundleError(f"{eid}: covariate {name!r} has {layer.size} cells, grid has {n}")
        if self.covariates.income_shares.shape != (N_QUANTILES,):
            raise BundleError(f"{eid}: income_shares must have {N_QUANTILES} entries")
        if np.any(self.covariates.income_shares <= 0):
            raise BundleError(f"{eid}: income_shares must be positive")
        for rid, cells in self.regions.regions.items():
            if cells.size and (cells.min() < 0 or cells.max() >= n):
                raise BundleError(f"{eid}: region {rid!r} references cells outside the grid")
        seen = set()
        for obs in self.observations:
            if obs.impact not in IMPACTS:
                raise BundleError(f"{eid}: observation impact {obs.impact!r} unknown")
            if obs.region not in self.regions.regions:
                raise BundleError(f"{eid}: observation references undefined region {obs.region!r}")
            if obs.value < 0 or int(obs.value) != obs.value:
                raise BundleError(f"{eid}: observation value for ({obs.region}, {obs.impact}) must be a non-negative integer")
            key = (obs.region, obs.impact)
            if key in seen:
                raise BundleError(f"{eid}: duplicate observation for ({obs.region}, {obs.impact})")
            seen.add(key)
            if obs.impact == "builddam" and self.exposure.build is None:
                raise BundleError(f"{eid}: building-damage observation but no building layer")
        if self.point_data is not None:
            pd = self.point_data
            if pd.cell.size and (pd.cell.min() < 0 or pd.cell.max() >= n):
                raise BundleError(f"{eid}: point data references cells outside the grid")
            if np.any(pd.n_damaged + pd.n_possible > pd.n_buildings):
                raise BundleError(f"{eid}: point data has more damaged than assessed buildings")
        return self


# ---------------------------------------------------------------------------
# CSV / JSON helpers

def _write_grid(path, grid2d, integer=False):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(grid2d):
            if integer:
                writer.writerow([int(v) for v in row])
            else:
                writer.writerow([repr(float(v)) for v in row])


def _read_grid(path, shape=None, integer=False):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise BundleError(f"cannot read grid file {path}: {exc}") from None
    dtype = np.int64 if integer else float
    try:
        arr = np.array([[dtype(v) for v in r] for r in rows], dtype=dtype)
    except ValueError as exc:
        raise BundleError(f"grid file {path} is malformed: {exc}") from None
    if shape is not None and arr.shape != tuple(shape):
        raise BundleError(f"grid file {path} has shape {arr.shape}, manifest says {tuple(shape)}")
    return arr


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise BundleError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path} is not valid JSON: {exc}") from None


def write_map_csv(path, grid2d, georef):
    """Write a gridded result with the bundle's georeference as a header line."""
    with open(path, "w", newline="") as fh:
        fh.write(
            "# georef origin_lon={origin_lon} origin_lat={origin_lat} "
            "cell_arcmin={cell_arcmin}\n".format(**georef)
        )
        writer = csv.writer(fh)
        for row in np.asarray(grid2d):
            writer.writerow([repr(float(v)) for v in row])


def read_map_csv(path):
    """Read a gridded result written by write_map_csv; returns (grid, georef)."""
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# georef"):
            raise BundleError(f"{path} missing georef header")
        georef = {}
        for token in header.split()[2:]:
            key, val = token.split("=")
            georef[key] = float(val)
        rows = [r for r in csv.reader(fh) if r]
    grid = np.array([[float(v) for v in r] for r in rows])
    return grid, georef


# ---------------------------------------------------------------------------
# Bundle persistence

def save_bundle(bundle, dirpath):
    """Write one event bundle to a directory; returns the manifest path."""
    bundle.validate()
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    rows, cols = bundle.shape

    hazard_entries = []
    for h in sorted(bundle.hazards, key=lambda h: h.ordering_index):
        fname = f"hazard_{h.ordering_index:02d}.csv"
        _write_grid(dirpath / fname, h.intensity.reshape(rows, cols))
        hazard_entries.append(
            {"file": fname, "first_haz": int(h.first_haz), "night": int(h.night),
             "ordering_index": int(h.ordering_index)}
        )

    pop_files = []
    for q in range(N_QUANTILES):
        fname = f"pop_q{q}.csv"
        _write_grid(dirpath / fname, bundle.exposure.pop[:, q].reshape(rows, cols), integer=True)
        pop_files.append(fname)
    build_file = None
    if bundle.exposure.build is not None:
        build_file = "build.csv"
        _write_grid(dirpath / build_file, bundle.exposure.build.reshape(rows, cols), integer=True)

    cov_files = {}
    for name in COVARIATE_NAMES:
        fname = f"cov_{name}.csv"
        _write_grid(dirpath / fname, np.asarray(bundle.covariates.raw[name]).reshape(rows, cols))
        cov_files[name] = fname

    with open(dirpath / "observations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "impact", "value"])
        for obs in bundle.observations:
            writer.writerow([obs.region, obs.impact, int(obs.value)])

    point_file = None
    if bundle.point_data is not None:
        point_file = "point_data.csv"
        pd = bundle.point_data
        with open(dirpath / point_file, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell", "n_buildings", "n_damaged", "n_possible", "max_intensity"])
            for k in range(pd.cell.size):
                writer.writerow(
                    [int(pd.cell[k]), int(pd.n_buildings[k]), int(pd.n_damaged[k]),
                     int(pd.n_possible[k]), repr(float(pd.max_intensity[k]))]
                )

    manifest = {
        "format_version": FORMAT_VERSION,
        "event_id": bundle.event_id,
        "grid": {"rows": rows, "cols": cols},
        "georef": bundle.georef,
        "hazards": hazard_entries,
        "firsthaz_convention": "first",
        "exposure": {"pop_files": pop_files, "build_file": build_file},
        "covariates": cov_files,
        "income_shares": [float(v) for v in bundle.covariates.income_shares],
        "standardization": {k: [float(m), float(s)] for k, (m, s) in bundle.covariates.constants.items()},
        "regions": {k: [int(c) for c in v] for k, v in bundle.regions.regions.items()},
        "regions_partition": bool(bundle.regions.is_partition),
        "observations_file": "observations.csv",
        "point_data_file": point_file,
        "provenance": bundle.provenance,
    }
    path = dirpath / "manifest.json"
    _dump_json(path, manifest)
    return path


def load_bundle(dirpath):
    """Read and fully validate one event bundle from a directory."""
    dirpath = Path(dirpath)
    manifest = _load_json(dirpath / "manifest.json")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(f"{dirpath}: format_version {version!r} unsupported (expected {FORMAT_VERSION})")
    grid = manifest["grid"]
    rows, cols = int(grid["rows"]), int(grid["cols"])
    shape2d = (rows, cols)

    convention = manifest.get("firsthaz_convention", "first")
    if convention not in ("first", "preceded"):
        raise BundleError(f"{dirpath}: firsthaz_convention {convention!r} unknown")
    hazards = []
    for entry in manifest["hazards"]:
        flag = int(entry["first_haz"])
        if convention == "preceded":
            flag = 1 - flag
        hazards.append(
            HazardInstance(
                intensity=_read_grid(dirpath / entry["file"], shape2d).ravel(),
                first_haz=flag,
                night=int(entry["night"]),
                ordering_index=int(entry["ordering_index"]),
            )
        )
    hazards.sort(key=lambda h: h.ordering_index)

    pop_files = manifest["exposure"]["pop_files"]
    if len(pop_files) != N_QUANTILES:
        raise BundleError(f"{dirpath}: expected {N_QUANTILES} population quantile files, got {len(pop_files)}")
    pop = np.stack([_read_grid(dirpath / f, shape2d, integer=True).ravel() for f in pop_files], axis=1)
    build_file = manifest["exposure"].get("build_file")
    build = _read_grid(dirpath / build_file, shape2d, integer=True).ravel() if build_file else None

    raw = {name: _read_grid(dirpath / fname, shape2d).ravel()
           for name, fname in manifest["covariates"].items()}
    constants = {k: (float(v[0]), float(v[1])) for k, v in manifest["standardization"].items()}
    covariates = CovariateGrid(raw=raw, income_shares=manifest["income_shares"], constants=constants)

    regions = RegionMap(
        regions={k: np.asarray(v, dtype=np.int64) for k, v in manifest["regions"].items()},
        is_partition=bool(manifest.get("regions_partition", False)),
    )

    observations = []
    with open(dirpath / manifest["observations_file"], newline="") as fh:
        for rec in csv.DictReader(fh):
            observations.append(
                Observation(region=rec["region"], impact=rec["impact"], value=int(rec["value"]))
            )

    point_data = None
    point_file = manifest.get("point_data_file")
    if point_file:
        cols_ = {"cell": [], "n_buildings": [], "n_damaged": [], "n_possible": [], "max_intensity": []}
        with open(dirpath / point_file, newline="") as fh:
            for rec in csv.DictReader(fh):
                for key in cols_:
                    cols_[key].append(float(rec[key]))
        point_data = PointData(**cols_)

    bundle = EventBundle(
        event_id=manifest["event_id"],
        shape=(rows, cols),
        georef=manifest["georef"],
        hazards=hazards,
        exposure=ExposureGrid(pop=pop, build=build),
        covariates=covariates,
        regions=regions,
        observations=observations,
        provenance=manifest.get("provenance", ""),
        point_data=point_data,
    )
    return bundle.validate()


# ---------------------------------------------------------------------------
# Dataset persistence (a directory of bundles plus optional generating truth)

def save_dataset(events, dirpath, truth=None, extra=None):
    """Write a dataset directory; `truth`/`extra` are optional JSON-able dicts."""
    dirpath = Path(dirpath)
    (dirpath / "events").mkdir(parents=True, exist_ok=True)
    entries = []
    for bundle in events:
        sub = f"events/{bundle.event_id}"
        save_bundle(bundle, dirpath / sub)
        entries.append(sub)
    meta = {"format_version": FORMAT_VERSION, "events": entries}
    if extra:
        meta.update(extra)
    _dump_json(dirpath / "dataset.json", meta)
    if truth is not None:
        _dump_json(dirpath / "truth.json", truth)
    return dirpath / "dataset.json"


def load_dataset(dirpath):
    """Read every bundle listed in a dataset directory."""
    dirpath = Path(dirpath)
    meta = _load_json(dirpath / "dataset.json")
    if meta.get("format_version") != FORMAT_VERSION:
        raise BundleError(f"{dirpath}: dataset format_version unsupported")
    return [load_bundle(dirpath / sub) for sub in meta["events"]]


def load_dataset_meta(dirpath):
    """The dataset.json payload (event list plus dataset-level metadata)."""
    return _load_json(Path(dirpath) / "dataset.json")


def load_truth(dirpath):
    path = Path(dirpath) / "truth.json"
    if not path.exists():
        return None
    return _load_json(path)
