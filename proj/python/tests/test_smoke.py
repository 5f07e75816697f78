# Copyright 2026 The ModalPrompt Lab Authors
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

import modalprompt as mp


@pytest.fixture(scope="module")
def tiny_backbone():
    return mp.pretrain_backbone(samples=120, epochs=1, max_context=2, seed=3)


def test_fixtures_reproduce():
    names = mp.fixture_names()
    assert {"modalprompt-ref", "moelora-ref", "finetune-ref"} <= set(names)
    for name in names:
        assert mp.check_fixture(name) == []


def test_fixture_mismatch_is_reported():
    csv = mp.fixture_csv("modalprompt-ref").replace("59.68", "49.68")
    diffs = mp.check_fixture("modalprompt-ref", csv)
    assert any(metric == "last.8" for metric, _, _ in diffs)


def test_report_values():
    r = mp.report([[80], [70, 60], [50, 55, 90]])
    assert r["last"]["mean"] == pytest.approx(65.0)
    assert r["bwt"]["values"][1] == pytest.approx(17.5)
    agg = mp.aggregate([r, r])
    assert agg["seeds"] == 2


def test_suite_roundtrip(tmp_path):
    suite = mp.generate_suite(tasks=3, n_train=10, n_eval=5, seed=2)
    summary = mp.suite_summary(suite)
    assert len(summary["tasks"]) == 3
    assert all(t["shift"] != 0 for t in summary["tasks"])
    suite.save(str(tmp_path / "s.jsonl"))
    back, warnings = mp.load_suite(tmp_path / "s.jsonl")
    assert warnings == []
    assert mp.suite_summary(back) == summary


def test_errors_map_to_exceptions():
    with pytest.raises(mp.ConfigError):
        mp.generate_suite(tasks=0)
    with pytest.raises(mp.Error):
        mp.report([[1.0], [2.0]])
    with pytest.raises(mp.ConfigError):
        mp.select_eval(np.eye(3), [1, 0, 0], [1, 0, 0], k=0)


def test_selection_and_proto_loss():
    protos = np.eye(4)
    x = np.array([0.0, 0.0, 1.0, 0.1])
    assert mp.select_eval(protos, x, x, k=1) == [3]
    assert mp.select_eval(protos, x, x, k=2) == [3, 4]
    assert 2 in mp.select_train(protos, x, x, current=2, k=2)
    p = np.array([1.0, 2.0, 3.0])
    assert mp.proto_loss(p, p, p) == pytest.approx(0.0, abs=1e-12)
    assert mp.proto_loss(p, -p, -p) == pytest.approx(4.0)


def test_train_tiny_run(tiny_backbone):
    suite = mp.generate_suite(tasks=2, n_train=12, n_eval=6, seed=1)
    out = mp.train("modalprompt", tiny_backbone, suite, seed=1, M=3, epochs_per_task=1)
    rows = out["matrix"]["rows"]
    assert [len(r) for r in rows] == [1, 2]
    assert len(out["stages"]) == 2
    assert out["config"]["M"] == 3
    with pytest.raises(mp.ConfigError):
        mp.train("no-such-variant", tiny_backbone, suite)


def test_cli_in_process():
    code, out, _ = mp.cli("oracle", "moelora-ref")
    assert code == 0
    assert "moelora-ref" in out
    code, _, _ = mp.cli("oracle", "nope")
    assert code == 2
