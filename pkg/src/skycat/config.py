"""Engine configuration and its INI representation.

The INI layout and key spellings follow the original tool::

    [parallelOptions]
    bigPixelNsideExp=15         ;Parallel task resolution
    overlapPixelNsideExp=18     ;Overlap pixel resolution

    [resultOptions]
    IDNsideExp = 29
    clusterDuplicatesArcSec = 0.5

    [incrementalStrategy]
    catalogIndexNsideExp = 17
    clusterRadiusArcSec = 1

    [K-meansLocalStrategy]
    maxClusters = 10000
    ...

Two keys are additions of this package: ``strategy`` and ``threads`` in
``[parallelOptions]``.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field

from .errors import InvalidConfig

log = logging.getLogger(__name__)

STRATEGIES = ("incremental", "kmeans")


@dataclass(frozen=True)
class KMeansParams:
    max_clusters: int = 10000
    # stage budget = a + (b*K + c*n)**d
    stage_coeffs: tuple[float, float, float, float] = (100.0, 10.0, 2.0, 1.0)
    min_consec_rdl: float = 0.10
    min_accum_rdl: float = 0.10
    max_run_stage: int = 3
    init_prob_accept: float = 0.5
    temp_run_length: int = 10
    temp_reduc_fact: float = 0.95
    elbow_fact: float = 2.0

    def stage_budget(self, k: int, n: int) -> int:
        a, b, c, d = self.stage_coeffs
        return max(1, int(a + (b * k + c * n) ** d))

    def validate(self):
        if self.max_clusters < 1:
            raise InvalidConfig("maxClusters", "must be >= 1")
        if self.max_run_stage < 1:
            raise InvalidConfig("maxRunStage", "must be >= 1")
        if not 0.0 < self.init_prob_accept <= 1.0:
            raise InvalidConfig("initProbAccept", "must lie in (0, 1]")
        if self.temp_run_length < 1:
            raise InvalidConfig("tempRunLengt", "must be >= 1")
        if not 0.0 < self.temp_reduc_fact < 1.0:
            raise InvalidConfig("tempReducFact", "must lie in (0, 1)")
        if not self.elbow_fact > 1.0:
            raise InvalidConfig("elbowFact", "must be > 1")
        if self.min_consec_rdl < 0 or self.min_accum_rdl < 0:
            raise InvalidConfig("minConsecRDL", "must be >= 0")


@dataclass(frozen=True)
class EngineConfig:
    task_k: int = 15
    overlap_k: int = 18
    id_k: int = 29
    cluster_duplicates_arcsec: float = 0.5
    catalog_index_k: int = 17
    cluster_radius_arcsec: float = 1.0
    kmeans: KMeansParams = field(default_factory=KMeansParams)
    strategy: str = "incremental"
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.task_k < self.overlap_k:
            raise InvalidConfig(
                "bigPixelNsideExp",
                f"need 0 < bigPixelNsideExp < overlapPixelNsideExp, got {self.task_k} and {self.overlap_k}",
            )
        if not self.overlap_k <= self.id_k <= 29:
            raise InvalidConfig("IDNsideExp", f"need overlapPixelNsideExp <= IDNsideExp <= 29, got {self.id_k}")
        if not 0 <= self.catalog_index_k <= 29:
            raise InvalidConfig("catalogIndexNsideExp", "must lie in [0, 29]")
        if not self.cluster_duplicates_arcsec > 0:
            raise InvalidConfig("clusterDuplicatesArcSec", "must be > 0")
        if not self.cluster_radius_arcsec > 0:
            raise InvalidConfig("clusterRadiusArcSec", "must be > 0")
        if self.strategy not in STRATEGIES:
            raise InvalidConfig("strategy", f"unknown strategy {self.strategy!r}")
        if self.threads < 1:
            raise InvalidConfig("threads", "must be a positive integer")
        self.kmeans.validate()

    def replace(self, **changes) -> EngineConfig:
        return dataclasses.replace(self, **changes)


# (section, key) -> (target, converter); target "kmeans.x" addresses KMeansParams.
_KEYS = {
    ("parallelOptions", "bigPixelNsideExp"): ("task_k", int),
    ("parallelOptions", "overlapPixelNsideExp"): ("overlap_k", int),
    ("parallelOptions", "strategy"): ("strategy", str),
    ("parallelOptions", "threads"): ("threads", int),
    ("resultOptions", "IDNsideExp"): ("id_k", int),
    ("resultOptions", "clusterDuplicatesArcSec"): ("cluster_duplicates_arcsec", float),
    ("incrementalStrategy", "catalogIndexNsideExp"): ("catalog_index_k", int),
    ("incrementalStrategy", "clusterRadiusArcSec"): ("cluster_radius_arcsec", float),
    ("K-meansLocalStrategy", "maxClusters"): ("kmeans.max_clusters", int),
    ("K-meansLocalStrategy", "maxTotStageVec0"): ("kmeans.stage_coeffs.0", float),
    ("K-meansLocalStrategy", "maxTotStageVec1"): ("kmeans.stage_coeffs.1", float),
    ("K-meansLocalStrategy", "maxTotStageVec2"): ("kmeans.stage_coeffs.2", float),
    ("K-meansLocalStrategy", "maxTotStageVec3"): ("kmeans.stage_coeffs.3", float),
    ("K-meansLocalStrategy", "minConsecRDL"): ("kmeans.min_consec_rdl", float),
    ("K-meansLocalStrategy", "minAccumRDL"): ("kmeans.min_accum_rdl", float),
    ("K-meansLocalStrategy", "maxRunStage"): ("kmeans.max_run_stage", int),
    ("K-meansLocalStrategy", "initProbAccept"): ("kmeans.init_prob_accept", float),
    ("K-meansLocalStrategy", "tempRunLengt"): ("kmeans.temp_run_length", int),
    ("K-meansLocalStrategy", "tempRunLength"): ("kmeans.temp_run_length", int),
    ("K-meansLocalStrategy", "tempReducFact"): ("kmeans.temp_reduc_fact", float),
    ("K-meansLocalStrategy", "elbowFact"): ("kmeans.elbow_fact", float),
}


def _convert(key, conv, raw):
    try:
        if conv is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if conv is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise InvalidConfig(key, f"cannot parse {raw!r}") from None


def parse_config(text: str) -> EngineConfig:
    """Parse INI text into an :class:`EngineConfig`.

    Missing keys keep their defaults; unknown sections or keys are logged
    and ignored.  Raises :class:`InvalidConfig` naming the offending key.
    """
    parser = configparser.ConfigParser(
        inline_comment_prefixes=(";", "#"), comment_prefixes=(";", "#"), interpolation=None
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig("<syntax>", str(exc).splitlines()[0]) from None

    top: dict = {}
    km: dict = {}
    coeffs = list(KMeansParams().stage_coeffs)
    for section in parser.sections():
        for key, raw in parser.items(section):
            entry = _KEYS.get((section, key))
            if entry is None:
                log.warning("ignoring unknown config key [%s] %s", section, key)
                continue
            target, conv = entry
            value = _convert(key, conv, raw)
            if target.startswith("kmeans.stage_coeffs."):
                coeffs[int(target.rsplit(".", 1)[1])] = value
            elif target.startswith("kmeans."):
                km[target[len("kmeans."):]] = value
            else:
                top[target] = value
    kmeans = KMeansParams(stage_coeffs=tuple(coeffs), **km)
    return EngineConfig(kmeans=kmeans, **top)


def format_config(cfg: EngineConfig) -> str:
    """Render a config back to INI text (round-trips through parse_config)."""
    km = cfg.kmeans
    a, b, c, d = km.stage_coeffs
    return (
        "[parallelOptions]\n"
        f"bigPixelNsideExp={cfg.task_k}\n"
        f"overlapPixelNsideExp={cfg.overlap_k}\n"
        f"strategy={cfg.strategy}\n"
        f"threads={cfg.threads}\n\n"
        "[resultOptions]\n"
        f"IDNsideExp={cfg.id_k}\n"
        f"clusterDuplicatesArcSec={cfg.cluster_duplicates_arcsec!r}\n\n"
        "[incrementalStrategy]\n"
        f"catalogIndexNsideExp={cfg.catalog_index_k}\n"
        f"clusterRadiusArcSec={cfg.cluster_radius_arcsec!r}\n\n"
        "[K-meansLocalStrategy]\n"
        f"maxClusters={km.max_clusters}\n"
        f"maxTotStageVec0={a!r}\nmaxTotStageVec1={b!r}\nmaxTotStageVec2={c!r}\nmaxTotStageVec3={d!r}\n"
        f"minConsecRDL={km.min_consec_rdl!r}\n"
        f"minAccumRDL={km.min_accum_rdl!r}\n"
        f"maxRunStage={km.max_run_stage}\n"
        f"initProbAccept={km.init_prob_accept!r}\n"
        f"tempRunLengt={km.temp_run_length}\n"
        f"tempReducFact={km.temp_reduc_fact!r}\n"
        f"elbowFact={km.elbow_fact!r}\n"
    )
