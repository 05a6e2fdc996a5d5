import numpy as np
import pytest

from ffsinger.cli import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    ConfigError,
    RunConfig,
    main,
)
from ffsinger.featureio import read_features, write_features
from ffsinger.training import default_inventory, export_phrases, generate_corpus

TINY_CFG = """\
# small run for functional tests
embed_dim = 16
enc_channels = 8
d_model = 16
num_layers = 1
updates = 4
batch_size = 2
warmup = 100
corpus_seed = 5
corpus_phrases = 3
val_count = 1
val_every = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = generate_corpus(5, 3)
    manifest = export_phrases(corpus.phrases, root / "data", default_inventory())
    cfg = root / "run.cfg"
    cfg.write_text(TINY_CFG + f"out_dir = {root / 'run'}\n", encoding="utf-8")
    return {"root": root, "corpus": corpus, "manifest": manifest, "cfg": cfg}


@pytest.fixture(scope="module")
def trained(workdir):
    assert main(["train", "--config", str(workdir["cfg"])]) == EXIT_OK
    ckpt = workdir["root"] / "run" / "checkpoint.ffck"
    assert ckpt.exists()
    return ckpt


# --------------------------------------------------------------------------
# run config parsing

def test_config_defaults():
    cfg = RunConfig.parse("")
    assert cfg["d_model"] == 256
    assert cfg["warmup"] == 4000
    assert cfg["self_attention"] is True


def test_config_overrides_and_comments():
    cfg = RunConfig.parse("d_model = 32 # small\n\n# full line comment\nwarmup=7\n")
    assert cfg["d_model"] == 32
    assert cfg["warmup"] == 7


def test_config_unknown_key_is_fatal():
    with pytest.raises(ConfigError, match="unknown config key"):
        RunConfig.parse("d_modle = 32\n")


def test_config_bad_value():
    with pytest.raises(ConfigError, match="bad value"):
        RunConfig.parse("updates = soon\n")


def test_config_missing_equals():
    with pytest.raises(ConfigError, match="key=value"):
        RunConfig.parse("just some words\n")


def test_config_bool_forms():
    assert RunConfig.parse("self_attention = off\n")["self_attention"] is False
    assert RunConfig.parse("self_attention = YES\n")["self_attention"] is True
    with pytest.raises(ConfigError):
        RunConfig.parse("self_attention = maybe\n")


def test_config_model_round_trip():
    cfg = RunConfig.parse("d_model = 32\nnum_layers = 1\nenc_channels = 8\n")
    model_cfg = cfg.model_config()
    assert model_cfg.decoder.d_model == 32
    assert model_cfg.encoder.glu_channels == 8


def test_config_inconsistent_dims_rejected():
    # enc_channels feeds both sides, so only k_f0 can go inconsistent
    with pytest.raises(ConfigError):
        RunConfig.parse("k_f0 = 0\n").model_config()


# --------------------------------------------------------------------------
# subcommands, happy paths

def test_align_output(workdir, capsys):
    score = next(iter((workdir["root"] / "data").glob("*.score")))
    assert main(["align", "--score", str(score)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "total_frames=" in out
    lines = [ln for ln in out.splitlines() if ln.startswith("group ")]
    assert lines, out
    for line in lines:
        assert "r_c=" in line and "adjusted=[" in line and "raw=[" in line


def test_train_writes_metrics_and_checkpoint(workdir, trained):
    metrics = (workdir["root"] / "run" / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "step,lr,train_l1,val_l1"
    assert len(metrics) == 1 + 4
    # val column filled only on val_every steps
    assert metrics[1].endswith(",")
    assert not metrics[2].endswith(",")


def test_synth_writes_features(workdir, trained, tmp_path):
    data = workdir["root"] / "data"
    score = data / "phrase000.score"
    f0 = data / "phrase000.f0.ffsv"
    out = tmp_path / "out.ffsv"
    assert main(["synth", "--checkpoint", str(trained), "--score", str(score),
                 "--f0", str(f0), "--out", str(out)]) == EXIT_OK
    frames, hop_ms = read_features(out)
    f0_frames, _ = read_features(f0)
    assert frames.shape == (f0_frames.shape[0], 64)
    assert hop_ms == 10


def test_synth_gt_durations_changes_output(workdir, trained, tmp_path):
    data = workdir["root"] / "data"
    args = ["synth", "--checkpoint", str(trained),
            "--score", str(data / "phrase000.score"),
            "--f0", str(data / "phrase000.f0.ffsv")]
    a, b = tmp_path / "a.ffsv", tmp_path / "b.ffsv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b), "--gt-durations",
                        str(data / "phrase000.durations.txt")]) == EXIT_OK
    assert not np.array_equal(read_features(a)[0], read_features(b)[0])


def test_synth_repeat_is_byte_identical(workdir, trained, tmp_path):
    data = workdir["root"] / "data"
    args = ["synth", "--checkpoint", str(trained),
            "--score", str(data / "phrase001.score"),
            "--f0", str(data / "phrase001.f0.ffsv")]
    a, b = tmp_path / "a.ffsv", tmp_path / "b.ffsv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_eval_csv(workdir, trained, tmp_path, capsys):
    out = tmp_path / "eval.csv"
    assert main(["eval", str(workdir["manifest"]), "--checkpoint", str(trained),
                 "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "phrase,l1"
    assert lines[-1].startswith("mean,")
    assert len(lines) == 2 + len(workdir["corpus"].phrases)
    per_phrase = [float(ln.split(",")[1]) for ln in lines[1:-1]]
    mean = float(lines[-1].split(",")[1])
    assert mean == pytest.approx(np.mean(per_phrase), abs=1e-5)
    assert out.read_text() == capsys.readouterr().out


def test_eval_gt_flag_changes_scores(workdir, trained, capsys):
    argv = ["eval", str(workdir["manifest"]), "--checkpoint", str(trained)]
    assert main(argv) == EXIT_OK
    table_out = capsys.readouterr().out
    assert main(argv + ["--gt-durations"]) == EXIT_OK
    gt_out = capsys.readouterr().out
    assert table_out != gt_out


def test_ablate_writes_report(workdir, capsys):
    assert main(["ablate", "--config", str(workdir["cfg"])]) == EXIT_OK
    report = (workdir["root"] / "run" / "ablation.csv").read_text().splitlines()
    assert report[0] == "variant,train_l1,val_l1"
    assert [ln.split(",")[0] for ln in report[1:]] == [
        "full", "no_self_attention", "gt_durations", "avg_durations"]
    out = capsys.readouterr().out
    assert "direction" in out


# --------------------------------------------------------------------------
# failure paths and exit codes

def test_align_missing_file():
    assert main(["align", "--score", "/nonexistent.score"]) == EXIT_USAGE


def test_train_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warmpu = 100\n")
    assert main(["train", "--config", str(cfg)]) == EXIT_USAGE


def test_synth_f0_length_mismatch(workdir, trained, tmp_path):
    data = workdir["root"] / "data"
    short = tmp_path / "short.ffsv"
    write_features(short, np.full(7, 220.0))
    assert main(["synth", "--checkpoint", str(trained),
                 "--score", str(data / "phrase000.score"),
                 "--f0", str(short), "--out", str(tmp_path / "x.ffsv")]) == EXIT_USAGE


def test_synth_rejects_wide_f0(workdir, trained, tmp_path):
    data = workdir["root"] / "data"
    wide = tmp_path / "wide.ffsv"
    write_features(wide, np.zeros((10, 3)))
    assert main(["synth", "--checkpoint", str(trained),
                 "--score", str(data / "phrase000.score"),
                 "--f0", str(wide), "--out", str(tmp_path / "x.ffsv")]) == EXIT_USAGE


def test_synth_corrupt_checkpoint(workdir, tmp_path):
    data = workdir["root"] / "data"
    bad = tmp_path / "bad.ffck"
    bad.write_bytes(b"FFCK" + b"\x00" * 100)
    assert main(["synth", "--checkpoint", str(bad),
                 "--score", str(data / "phrase000.score"),
                 "--f0", str(data / "phrase000.f0.ffsv"),
                 "--out", str(tmp_path / "x.ffsv")]) == EXIT_USAGE


def test_synth_unknown_phoneme(workdir, trained, tmp_path):
    # a score symbol outside the checkpoint inventory is a usage error
    inv = tmp_path / "inv.txt"
    inv.write_text("sil silence\nq vowel\n")
    score = tmp_path / "weird.score"
    score.write_text("version 1\ninventory inv.txt\nnote 0 10 60 q\n")
    f0 = tmp_path / "f0.ffsv"
    write_features(f0, np.full(10, 220.0))
    assert main(["synth", "--checkpoint", str(trained), "--score", str(score),
                 "--f0", str(f0), "--out", str(tmp_path / "x.ffsv")]) == EXIT_USAGE


def test_eval_empty_manifest(workdir, trained, tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert main(["eval", str(empty), "--checkpoint", str(trained)]) == EXIT_USAGE


def test_train_non_finite_exits_3(tmp_path):
    # base_lr huge enough that weight products overflow float64 range
    cfg = tmp_path / "explode.cfg"
    cfg.write_text(TINY_CFG + f"out_dir = {tmp_path}\nbase_lr = 1e200\nupdates = 9\n"
                   "warmup = 1\n")
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["train", "--config", str(cfg)]) == EXIT_RUNTIME


def test_exit_runtime_constant_distinct():
    assert EXIT_OK == 0 and EXIT_USAGE == 2 and EXIT_RUNTIME == 3
