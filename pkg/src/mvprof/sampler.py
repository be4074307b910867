"""Frame-index planning: segment-dense (PATS) and uniform sampling.

A plan turns a clip of ``video_length`` frames and a frame budget into an ordered
list of frame indices. PATS concentrates the budget in a few short continuous
segments spread across the clip; uniform sampling spreads it over the whole clip.
All rounding is half-away-from-zero and done in integer arithmetic, so plans are
exact and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, InputError, FormatError


def round_ratio(num: int, den: int) -> int:
    """``round(num / den)`` half away from zero, for ``num >= 0`` and ``den > 0``."""
    return (2 * num + den) // (2 * den)


@dataclass(frozen=True)
class SamplerConfig:
    n_target: int
    n_segments: int = 1
    segment_duration: int = 1

    def __post_init__(self):
        if self.n_target < 1:
            raise ConfigError(f"n_target must be >= 1, got {self.n_target}")
        if self.n_segments < 1:
            raise ConfigError(f"n_segments must be >= 1, got {self.n_segments}")
        if self.n_segments > self.n_target:
            raise ConfigError(
                f"n_segments ({self.n_segments}) exceeds n_target ({self.n_target})"
            )
        if self.segment_duration < 1:
            raise ConfigError(f"segment_duration must be >= 1, got {self.segment_duration}")


@dataclass
class FramePlan:
    indices: list[int]
    segments: list[tuple[int, int]]
    video_length: int
    budgets: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.budgets:
            self.budgets = _count_budgets(self.indices, self.segments)

    @property
    def n_target(self) -> int:
        return len(self.indices)

    @property
    def has_duplicates(self) -> bool:
        return len(set(self.indices)) < len(self.indices)

    def to_dict(self) -> dict:
        return {
            "video_length": self.video_length,
            "indices": list(self.indices),
            "segments": [[s, d] for s, d in self.segments],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FramePlan":
        try:
            return cls(
                indices=[int(i) for i in obj["indices"]],
                segments=[(int(s), int(d)) for s, d in obj["segments"]],
                video_length=int(obj["video_length"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed frame plan: {exc}") from exc

    def to_text(self) -> str:
        lines = [f"video_length {self.video_length}"]
        lines += [f"segment {s} {d}" for s, d in self.segments]
        lines.append("indices " + " ".join(str(i) for i in self.indices))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FramePlan":
        length, segments, indices = None, [], None
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "video_length" and len(parts) == 2:
                    length = int(parts[1])
                elif parts[0] == "segment" and len(parts) == 3:
                    segments.append((int(parts[1]), int(parts[2])))
                elif parts[0] == "indices":
                    indices = [int(p) for p in parts[1:]]
                else:
                    raise ValueError(line)
            except ValueError as exc:
                raise FormatError(f"line {lineno}: cannot parse {line!r}") from exc
        if length is None or indices is None:
            raise FormatError("plan text needs 'video_length' and 'indices' lines")
        return cls(indices=indices, segments=segments, video_length=length)


def _count_budgets(indices, segments) -> list[int]:
    counts = [0] * len(segments)
    k = 0
    for i in sorted(indices):
        while k < len(segments) and i >= segments[k][0] + segments[k][1]:
            k += 1
        if k < len(segments):
            counts[k] += 1
    return counts


def _spread(length: int, n_target: int, start: int = 0) -> list[int]:
    """``n_target`` evenly spaced indices in ``[start, start + length - 1]``, endpoints included."""
    if n_target == 1:
        return [start + round_ratio(length - 1, 2)]
    # start + round_ratio(j * (length - 1), n_target - 1), inlined: this is the sampler's hot loop
    step, den = 2 * (length - 1), 2 * (n_target - 1)
    half = n_target - 1 + den * start
    return [(j * step + half) // den for j in range(n_target)]


def pats_plan(video_length: int, config: SamplerConfig) -> FramePlan:
    """Segment-dense plan.

    Steps: the segment duration is ``max(1, min(d_s, F // N_s))``; the budget is
    split as evenly as possible with the remainder going to the earliest segments;
    a segment whose budget exceeds its duration is lengthened to the budget when
    all segments still fit in the clip; segment starts are spread evenly with the
    first at 0 and the last ending at ``F`` (centred for a single segment); frames
    are spaced evenly inside each segment, endpoints included.
    """
    if video_length < 1:
        raise InputError(f"video_length must be >= 1, got {video_length}")
    F, n, ns = video_length, config.n_target, config.n_segments
    d_eff = max(1, min(config.segment_duration, F // ns))
    base, extra = divmod(n, ns)
    budgets = [base + (1 if i < extra else 0) for i in range(ns)]

    durations = [max(d_eff, b) for b in budgets]
    if sum(durations) > F:
        durations = [d_eff] * ns
    slack = F - sum(durations)

    starts = []
    if slack >= 0:
        offset = 0
        for i in range(ns):
            spread = round_ratio(i * slack, ns - 1) if ns > 1 else slack // 2
            starts.append(offset + spread)
            offset += durations[i]
    else:
        # F < N_s: unit segments necessarily overlap
        starts = [round_ratio(i * (F - d_eff), ns - 1) if ns > 1 else 0 for i in range(ns)]

    indices = []
    for s, d, b in zip(starts, durations, budgets):
        indices += _spread(d, b, s)
    indices.sort()
    return FramePlan(indices, list(zip(starts, durations)), F, budgets)


def uniform_plan(video_length: int, n_target: int) -> FramePlan:
    if video_length < 1:
        raise InputError(f"video_length must be >= 1, got {video_length}")
    if n_target < 1:
        raise InputError(f"n_target must be >= 1, got {n_target}")
    return FramePlan(_spread(video_length, n_target), [(0, video_length)], video_length,
                     [n_target])


@dataclass(frozen=True)
class DensityReport:
    coverage_fraction: float
    max_gap: int
    within_segment_density: float


def density_report(plan: FramePlan) -> DensityReport:
    idx = plan.indices
    span = idx[-1] - idx[0] if idx else 0
    gaps = [b - a for a, b in zip(idx, idx[1:])]
    dens = [b / d for b, (_, d) in zip(plan.budgets, plan.segments)]
    return DensityReport(
        coverage_fraction=span / plan.video_length,
        max_gap=max(gaps, default=0),
        within_segment_density=sum(dens) / len(dens) if dens else 0.0,
    )
