"""Raw vibration snapshots: file reading, manifests and synthetic traces.

Snapshot files follow the IMS bearing layout: plain text, one acceleration
sample per row, one column per channel.  A manifest (INI syntax) lists the
bearings of an experiment together with their failure labels.

Manifest schema::

    [manifest]
    delimiter = whitespace      ; or any single character, e.g. "," or "\\t"
    columns = 1                 ; column count of every snapshot file
    rate = 20000                ; sampling rate in Hz

    [bearing:b1]
    label = 1                   ; 1 = failed, 0 = non-failing
    path = b1                   ; directory, relative to the manifest file
    channel = 0                 ; column index, or a comma list "0, 1"

Any key of ``[manifest]`` may be overridden inside a bearing section.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class IngestError(ValueError):
    """Raised for unreadable snapshot files or inconsistent manifests."""


@dataclass(frozen=True)
class Layout:
    """Column layout of a snapshot file."""

    columns: int = 1
    delimiter: str | None = None  # None means any run of whitespace

    def __post_init__(self):
        if self.columns < 1:
            raise IngestError(f"column count must be >= 1, got {self.columns}")


@dataclass(frozen=True)
class SampleWindow:
    samples: np.ndarray
    rate: float
    timestamp: int = 0
    bearing_id: str = ""
    channel: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise IngestError("a window needs a non-empty 1-d sample array")
        if not np.all(np.isfinite(samples)):
            raise IngestError("window samples must be finite")
        if not self.rate > 0:
            raise IngestError(f"sampling rate must be positive, got {self.rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class BearingEntry:
    bearing_id: str
    label: int
    path: Path
    channels: tuple[int, ...] = (0,)
    layout: Layout = field(default_factory=Layout)
    rate: float = 20000.0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise IngestError(f"{self.bearing_id}: label must be 0 or 1, got {self.label}")
        if not self.channels:
            raise IngestError(f"{self.bearing_id}: at least one channel is required")
        for ch in self.channels:
            if not 0 <= ch < self.layout.columns:
                raise IngestError(
                    f"{self.bearing_id}: channel {ch} outside 0..{self.layout.columns - 1}")


@dataclass(frozen=True)
class BearingManifest:
    entries: tuple[BearingEntry, ...]

    def __post_init__(self):
        ids = [e.bearing_id for e in self.entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise IngestError(f"duplicate bearing ids in manifest: {dupes}")

    def __getitem__(self, bearing_id: str) -> BearingEntry:
        for entry in self.entries:
            if entry.bearing_id == bearing_id:
                return entry
        raise KeyError(f"unknown bearing id {bearing_id!r}")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def bearing_ids(self) -> list[str]:
        return [e.bearing_id for e in self.entries]


def _parse_delimiter(text: str) -> str | None:
    text = text.strip()
    if text.lower() in ("", "whitespace", "ws"):
        return None
    if text.lower() in ("tab", "\\t"):
        return "\t"
    if text.lower() == "comma":
        return ","
    if len(text) != 1:
        raise IngestError(f"delimiter must be a single character or 'whitespace', got {text!r}")
    return text


def _format_delimiter(delimiter: str | None) -> str:
    return {None: "whitespace", "\t": "tab", ",": "comma"}.get(delimiter, delimiter)


def load_manifest(path: str | Path) -> BearingManifest:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"manifest not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read(path, encoding="utf-8")
    defaults = parser["manifest"] if parser.has_section("manifest") else {}

    def get(section, key, fallback):
        if key in section:
            return section[key]
        return defaults.get(key, fallback)

    entries = []
    for name in parser.sections():
        if not name.startswith("bearing:"):
            continue
        sec = parser[name]
        bearing_id = name.split(":", 1)[1].strip()
        try:
            layout = Layout(columns=int(get(sec, "columns", "1")),
                            delimiter=_parse_delimiter(get(sec, "delimiter", "whitespace")))
            channels = tuple(int(c) for c in get(sec, "channel", "0").split(","))
            label = int(sec["label"])
            rate = float(get(sec, "rate", "20000"))
        except (KeyError, ValueError) as exc:
            raise IngestError(f"manifest section [{name}]: {exc}") from exc
        entry_path = Path(sec.get("path", bearing_id))
        if not entry_path.is_absolute():
            entry_path = path.parent / entry_path
        entries.append(BearingEntry(bearing_id, label, entry_path, channels, layout, rate))
    if not entries:
        raise IngestError(f"manifest {path} lists no [bearing:...] sections")
    return BearingManifest(tuple(entries))


def write_manifest(manifest: BearingManifest, path: str | Path) -> None:
    """Write *manifest* so that ``load_manifest`` reproduces it.

    Bearing paths below the manifest's directory are stored relative to it.
    """
    path = Path(path)
    parser = configparser.ConfigParser()
    for entry in manifest:
        try:
            rel = entry.path.resolve().relative_to(path.parent.resolve())
        except ValueError:
            rel = entry.path
        parser[f"bearing:{entry.bearing_id}"] = {
            "label": str(entry.label),
            "path": rel.as_posix(),
            "channel": ", ".join(str(c) for c in entry.channels),
            "columns": str(entry.layout.columns),
            "delimiter": _format_delimiter(entry.layout.delimiter),
            "rate": repr(float(entry.rate)),
        }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def read_snapshot(path: str | Path, channel: int = 0, layout: Layout | None = None,
                  rate: float = 20000.0, timestamp: int = 0,
                  bearing_id: str = "") -> SampleWindow:
    """Read one column of a snapshot file, in file order.

    Errors cite 1-based line numbers.  Blank lines are skipped.
    """
    layout = layout or Layout()
    path = Path(path)
    if not 0 <= channel < layout.columns:
        raise IngestError(f"channel {channel} out of range for {layout.columns} column(s)")
    if not path.is_file():
        raise IngestError(f"snapshot file not found: {path}")
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tokens = line.split(layout.delimiter)
            if len(tokens) != layout.columns:
                raise IngestError(f"{path}:{lineno}: expected {layout.columns} column(s), "
                                  f"found {len(tokens)}")
            token = tokens[channel].strip()
            try:
                value = float(token)
            except ValueError:
                raise IngestError(f"{path}:{lineno}: malformed line, non-numeric token "
                                  f"{token!r}") from None
            if not math.isfinite(value):
                raise IngestError(f"{path}:{lineno}: non-finite value {token!r}")
            values.append(value)
    if not values:
        raise IngestError(f"{path}: no samples")
    return SampleWindow(np.array(values), rate, timestamp, bearing_id, channel)


def write_snapshot(path: str | Path, columns: Sequence[np.ndarray], layout: Layout | None = None,
                   precision: int = 6) -> None:
    """Write equal-length sample columns with *precision* significant digits."""
    layout = layout or Layout(columns=len(columns))
    if len(columns) != layout.columns:
        raise IngestError(f"layout declares {layout.columns} column(s), got {len(columns)}")
    sep = "\t" if layout.delimiter is None else layout.delimiter
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", encoding="utf-8") as fh:
        for row in data:
            fh.write(sep.join(f"{v:.{precision}g}" for v in row))
            fh.write("\n")


def stream_bearing(manifest: BearingManifest, bearing_id: str,
                   channel: int | None = None) -> Iterator[SampleWindow]:
    """Yield one window per snapshot file of a bearing, in filename order.

    Files are timestamp-named in the IMS set, so lexicographic order is time
    order.  ``channel`` defaults to the first channel listed in the manifest.
    """
    try:
        entry = manifest[bearing_id]
    except KeyError:
        raise IngestError(f"unknown bearing id {bearing_id!r}") from None
    if not entry.path.is_dir():
        raise IngestError(f"{bearing_id}: directory not readable: {entry.path}")
    files = sorted((p for p in entry.path.iterdir() if p.is_file() and not p.name.startswith(".")),
                   key=lambda p: p.name)
    if not files:
        raise IngestError(f"{bearing_id}: empty stream, no snapshot files in {entry.path}")
    ch = entry.channels[0] if channel is None else channel
    for ordinal, file in enumerate(files):
        yield read_snapshot(file, ch, entry.layout, entry.rate, ordinal, bearing_id)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic bearing run-to-failure trace.

    The healthy part is Gaussian noise plus a shaft tone.  From ``onset`` on,
    the vibration amplitude grows by ``amp_growth`` per window (relative) and
    periodic defect impulses appear with height growing by ``impulse_growth``
    noise-floor units per window.
    """

    n_windows: int = 600
    onset: int | None = None  # None: healthy for the whole trace
    amp_growth: float = 0.0
    impulse_growth: float = 0.0
    noise_floor: float = 0.1
    seed: int = 0
    window_size: int = 1024
    rate: float = 20000.0
    shaft_hz: float = 33.3
    defect_hz: float = 236.4
    bearing_id: str = "synth"

    def __post_init__(self):
        if self.n_windows < 1:
            raise IngestError("n_windows must be >= 1")
        if self.onset is not None and not 0 <= self.onset <= self.n_windows:
            raise IngestError(f"onset {self.onset} outside 0..{self.n_windows}")
        if self.amp_growth < 0 or self.impulse_growth < 0:
            raise IngestError("growth rates must be >= 0")
        if not self.noise_floor > 0:
            raise IngestError("noise floor must be positive")
        if self.window_size < 4:
            raise IngestError("window_size must be >= 4")
        if not self.rate > 0:
            raise IngestError("rate must be positive")


def synth_matrix(spec: SynthSpec) -> np.ndarray:
    """Synthetic trace as an n_windows x window_size array (see `SynthSpec`)."""
    rng = np.random.default_rng(spec.seed)
    nw, ws = spec.n_windows, spec.window_size
    t = np.arange(ws) / spec.rate
    onset = spec.n_windows if spec.onset is None else spec.onset
    phase = rng.uniform(0.0, 2 * np.pi, size=(nw, 1))
    x = spec.noise_floor * rng.standard_normal((nw, ws))
    x += 0.5 * spec.noise_floor * np.sin(2 * np.pi * spec.shaft_hz * t + phase)
    age = np.arange(nw) - onset + 1          # 1 on the onset window
    age = np.maximum(age, 0)[:, None].astype(float)
    x *= 1.0 + spec.amp_growth * age
    # one decaying resonance burst per defect period, random start offset
    period = max(int(round(spec.rate / spec.defect_hz)), 2)
    start = rng.integers(period, size=(nw, 1))
    n = np.arange(ws)[None, :]
    decay = np.exp(-((n - start) % period) / (0.1 * period)) * (n >= start)
    carrier = np.sin(2 * np.pi * 3000.0 * t)
    x += spec.impulse_growth * age * spec.noise_floor * decay * carrier
    return x


def synth_bearing(spec: SynthSpec) -> list[SampleWindow]:
    """Deterministic synthetic trace: stationary before onset, degrading after."""
    return [SampleWindow(row, spec.rate, i, spec.bearing_id, 0)
            for i, row in enumerate(synth_matrix(spec))]


def write_bearing_dir(directory: str | Path, windows: Sequence[SampleWindow],
                      precision: int = 6) -> None:
    """Write windows as timestamp-ordered snapshot files ``00000.txt`` ..."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for w in windows:
        write_snapshot(directory / f"{w.timestamp:05d}.txt", [w.samples], precision=precision)
