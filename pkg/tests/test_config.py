import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skycat.config import EngineConfig, KMeansParams, format_config, parse_config
from skycat.errors import InvalidConfig

LISTING = """\
[parallelOptions]
bigPixelNsideExp=15\t\t;Parallel task resolution
overlapPixelNsideExp=18\t\t;Overlap pixel resolution

[resultOptions]
IDNsideExp = 29\t\t\t;Catalog ID generation resolution
clusterDuplicatesArcSec = 0.5\t;Distance at which two clusters will be identified as duplicates <arcsec>

[incrementalStrategy]
catalogIndexNsideExp = 17\t;Resolution of the index inside one task
clusterRadiusArcSec = 1 \t\t;Distance at which I will add a point to the cluster <arcsec>
"""


def test_reference_listing():
    cfg = parse_config(LISTING)
    assert (cfg.task_k, cfg.overlap_k, cfg.id_k) == (15, 18, 29)
    assert cfg.cluster_duplicates_arcsec == 0.5
    assert cfg.catalog_index_k == 17
    assert cfg.cluster_radius_arcsec == 1.0


def test_empty_is_default():
    assert parse_config("") == EngineConfig()


def test_kmeans_section():
    cfg = parse_config(
        "[K-meansLocalStrategy]\nmaxClusters=50\nmaxTotStageVec0=10\nmaxTotStageVec3=2\n"
        "elbowFact=3.5\ntempRunLengt=4\ninitProbAccept=0.25\n"
    )
    km = cfg.kmeans
    assert km.max_clusters == 50
    assert km.stage_coeffs == (10.0, 10.0, 2.0, 2.0)
    assert km.elbow_fact == 3.5
    assert km.temp_run_length == 4
    assert km.init_prob_accept == 0.25


def test_unknown_key_warns(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = parse_config("[parallelOptions]\nbogus=1\n[other]\nx=2\n")
    assert cfg == EngineConfig()
    assert "bogus" in caplog.text and "other" in caplog.text


@pytest.mark.parametrize(
    "text, key",
    [
        ("[parallelOptions]\nbigPixelNsideExp=18\noverlapPixelNsideExp=18\n", "bigPixelNsideExp"),
        ("[parallelOptions]\nbigPixelNsideExp=0\n", "bigPixelNsideExp"),
        ("[resultOptions]\nIDNsideExp=30\n", "IDNsideExp"),
        ("[resultOptions]\nclusterDuplicatesArcSec=0\n", "clusterDuplicatesArcSec"),
        ("[incrementalStrategy]\nclusterRadiusArcSec=-1\n", "clusterRadiusArcSec"),
        ("[incrementalStrategy]\ncatalogIndexNsideExp=1.5\n", "catalogIndexNsideExp"),
        ("[K-meansLocalStrategy]\ninitProbAccept=0\n", "initProbAccept"),
        ("[K-meansLocalStrategy]\ntempReducFact=1\n", "tempReducFact"),
        ("[K-meansLocalStrategy]\nelbowFact=1\n", "elbowFact"),
        ("[parallelOptions]\nstrategy=em\n", "strategy"),
        ("[parallelOptions]\nthreads=0\n", "threads"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(InvalidConfig) as info:
        parse_config(text)
    assert info.value.key == key


def test_syntax_error():
    with pytest.raises(InvalidConfig):
        parse_config("no section header\n")


def test_stage_budget():
    assert KMeansParams().stage_budget(3, 100) == 100 + 30 + 200


@given(
    st.integers(1, 27).flatmap(lambda t: st.tuples(st.just(t), st.integers(t + 1, 28))),
    st.floats(0.01, 10),
    st.floats(0.01, 10),
    st.sampled_from(["incremental", "kmeans"]),
    st.integers(1, 64),
    st.floats(1.01, 10),
)
def test_format_roundtrip(ks, dup, radius, strategy, threads, elbow):
    cfg = EngineConfig(
        task_k=ks[0],
        overlap_k=ks[1],
        cluster_duplicates_arcsec=dup,
        cluster_radius_arcsec=radius,
        strategy=strategy,
        threads=threads,
        kmeans=KMeansParams(elbow_fact=elbow),
    )
    assert parse_config(format_config(cfg)) == cfg
