import math

import pytest

import promptrec


def small_config(tmp_path):
    return promptrec.Config(
        {
            "seed": "3",
            "gen_warm_users": "60",
            "gen_cold_users": "30",
            "gen_num_items": "120",
            "model_dim": "8",
            "max_seq_len": "12",
            "pretrain_epochs": "1",
            "epochs": "1",
            "out_dir": str(tmp_path),
        }
    )


def test_closed_form_losses():
    assert abs(promptrec.bpr_loss([0.0, 0.0], [0.0, 0.0]) - math.log(2)) < 1e-12
    assert abs(promptrec.info_nce([[1.0, 2.0]], [[0.3, -1.0]])) < 1e-12
    e, ei = math.e, math.exp(-1)
    value = promptrec.info_nce([[1.0, 0.0], [-1.0, 0.0]], [[2.0, 0.0], [-3.0, 0.0]], tau=1.0)
    assert abs(value + math.log(e / (e + ei))) < 1e-9


def test_metrics():
    assert promptrec.case_auc(2.0, [1.0, 2.0, 3.0, 0.0]) == pytest.approx(0.625)
    assert promptrec.rank_case(2.0, [1.0, 2.0, 3.0, 0.0]) == 3
    assert promptrec.hit_at_n([1, 5, 30], 10) == pytest.approx(2 / 3)
    assert promptrec.ndcg_at_n([1], 5) == pytest.approx(1.0)
    assert promptrec.f1_score(0.42, 0.74) == pytest.approx(0.53586, abs=1e-5)


def test_unknown_config_key_is_rejected():
    with pytest.raises(promptrec.ConfigError):
        promptrec.Config({"no_such_key": "1"})
    assert "lambda" in promptrec.Config.keys()


def test_pipeline_freezes_backbone_in_light_mode(tmp_path):
    cfg = small_config(tmp_path)
    syn = promptrec.generate_synthetic(cfg)
    assert syn.num_users == 90
    ds = promptrec.synthetic_dataset(syn, cfg)
    assert ds.num_items == 120
    pre = promptrec.pretrain(ds, cfg)
    assert pre.meta["kind"] == "pretrained"
    tuned, curves = promptrec.tune(ds, pre, cfg)
    assert tuned.backbone_bytes() == pre.backbone_bytes()
    expected = (tuned.count("prompt_generator") + tuned.count("profile_learner")) / tuned.total_count
    assert curves["trainable_fraction"] == expected
    report = promptrec.evaluate(ds, tuned, cfg, "zeroshot")
    assert 0.0 <= report["auc"] <= 1.0
    assert report["cases"] == ds.cold_test_users


def test_checkpoint_round_trip_and_cli(tmp_path):
    cfg = small_config(tmp_path)
    syn = promptrec.generate_synthetic(cfg)
    syn.write(str(tmp_path))
    ds = promptrec.load_dataset(
        promptrec.Config(
            {"interactions": str(tmp_path / "interactions.tsv"), "profiles": str(tmp_path / "profiles.tsv")}
        )
    )
    assert ds.num_users == 90
    pre = promptrec.pretrain(ds, cfg)
    path = tmp_path / "p.ckpt"
    pre.save(str(path))
    assert promptrec.load_checkpoint(str(path)).backbone_bytes() == pre.backbone_bytes()
    with pytest.raises(promptrec.CheckpointError):
        promptrec.load_checkpoint(str(tmp_path / "missing.ckpt"))
    assert promptrec.run_cli(["tune", "--set", "bogus=1"]) == 2
