import json

import numpy as np
import pytest

from kdde.studies import (
    SchemaVersionError,
    StudyConfig,
    StudyConfigError,
    hash64,
    load_records,
    replication_seed,
    run_cluster_study,
    run_ise_study,
    write_result,
)


def small_ise(**kw):
    base = dict(study="ise", models=["normal-2d"], n=80, replications=3, selectors=["or", "nr", "pi"], seed=5)
    base.update(kw)
    return StudyConfig(**base)


def test_hash64_stable():
    assert hash64(1, "a", 0, 2) == hash64(1, "a", 0, 2)
    assert hash64(1, "a", 0, 2) != hash64(1, "a", 0, 3)
    assert 0 <= hash64("x") < 2**64


def test_seeds_are_paired_across_selectors():
    res = run_ise_study(small_ise())
    by_rep = {}
    for rec in res.records:
        by_rep.setdefault(rec["rep"], set()).add(rec["seed"])
    assert all(len(s) == 1 for s in by_rep.values())
    assert by_rep[0] == {replication_seed(5, "normal-2d", 0, 0)}


def test_record_count_and_positivity():
    res = run_ise_study(small_ise(r_orders=[0, 1]))
    assert len(res.records) == 1 * 3 * 3 * 2
    assert all(r["status"] == "ok" and r["ise"] > 0 and np.isfinite(r["ise"]) for r in res.records)
    assert {row["selector"] for row in res.summary} == {"or", "nr", "pi"}


def test_byte_identical_rerun(tmp_path):
    cfg = small_ise(replications=1)
    a = write_result(run_ise_study(cfg), tmp_path / "a")
    b = write_result(run_ise_study(cfg), tmp_path / "b")
    assert a["records"].read_bytes() == b["records"].read_bytes()
    assert a["summary"].read_bytes() == b["summary"].read_bytes()


def test_failures_are_recorded():
    res = run_cluster_study(StudyConfig(study="cluster", models=["two-gaussians"], n=100, replications=1,
                                        selectors=["or", "nr"], seed=1))
    status = {r["selector"]: r["status"] for r in res.records}
    assert status == {"or": "failed", "nr": "ok"}
    assert [row["failures"] for row in res.summary if row["selector"] == "or"] == [1]


def test_cluster_study_two_gaussians():
    res = run_cluster_study(StudyConfig(study="cluster", models=["two-gaussians"], n=200, replications=3,
                                        selectors=["nr"], seed=2))
    assert all(r["ari"] == 1.0 for r in res.records)
    assert res.records[0]["r"] == 1


def test_schema_version_checked(tmp_path):
    p = tmp_path / "r.ndjson"
    p.write_text(json.dumps({"schema": 999}) + "\n")
    with pytest.raises(SchemaVersionError):
        load_records(p)


def test_round_trip(tmp_path):
    res = run_ise_study(small_ise(replications=1, selectors=["nr"]))
    paths = write_result(res, tmp_path)
    assert load_records(paths["records"]) == json.loads(json.dumps(res.records))


@pytest.mark.parametrize(
    "kw",
    [dict(replications=0), dict(models=["no-such"]), dict(selectors=["mle"]), dict(study="fit")],
)
def test_config_errors(kw):
    with pytest.raises((StudyConfigError, ValueError)):
        small_ise(**kw)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(StudyConfigError):
        StudyConfig.from_dict(dict(study="ise", models=["normal-2d"], colour="red"))


def test_ise_study_rejects_cluster_models():
    with pytest.raises(StudyConfigError):
        run_ise_study(StudyConfig(study="ise", models=["broken-ring"], n=50, replications=1, selectors=["nr"]))
