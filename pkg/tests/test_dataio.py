import json
from collections import Counter
import numpy as np
import pytest

from metaselect.dataio import (
    DEV_TRAIN,
    META_TRAIN,
    TEST,
    ManifestError,
    ManifestRow,
    SampleError,
    SplitError,
    SplitPlan,
    load_manifest,
    load_sample,
    make_split_plan,
    read_pgm,
    write_manifest,
    write_pgm,
)
from oracles import assert_stratified, protocol_samples

HEADER = "id,image_path,mask_path,label,source\n"


def _write(tmp_path, text):
    p = tmp_path / "manifest.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_manifest_three_rows(tmp_path):
    p = _write(tmp_path, HEADER + "a,i/a.pgm,m/a.pgm,0,busi\nb,i/b.pgm,m/b.pgm,1,udiat\nc,i/c.pgm,m/c.pgm,1,busi\n")
    man = load_manifest(p)
    assert [r.id for r in man] == ["a", "b", "c"]
    assert man.rows[1].label == 1 and man.rows[1].source == "udiat"
    assert man.rows[0].image_path == tmp_path / "i" / "a.pgm"


def test_manifest_header_only(tmp_path):
    assert len(load_manifest(_write(tmp_path, HEADER))) == 0


def test_manifest_bad_label(tmp_path):
    p = _write(tmp_path, HEADER + "a,x,y,0,s\nb,x,y,2,s\n")
    with pytest.raises(ManifestError, match="invalid label at line 3"):
        load_manifest(p)


def test_manifest_duplicate_and_malformed(tmp_path):
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(_write(tmp_path, HEADER + "a,x,y,0,s\na,x,y,1,s\n"))
    with pytest.raises(ManifestError, match="line 2"):
        load_manifest(_write(tmp_path, HEADER + "a,x,y,0\n"))


def test_manifest_roundtrip(tmp_path):
    rows = [ManifestRow("a", tmp_path / "img" / "a.pgm", tmp_path / "msk" / "a.pgm", 1, "s1")]
    write_manifest(tmp_path / "m.csv", rows)
    assert (tmp_path / "m.csv").read_text().splitlines()[1] == "a,img/a.pgm,msk/a.pgm,1,s1"
    assert load_manifest(tmp_path / "m.csv").rows == tuple(rows)


def test_pgm_roundtrip(tmp_path, rng):
    img = rng.integers(0, 256, size=(17, 23)).astype(np.uint8)
    write_pgm(tmp_path / "x.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), img)


def test_pgm_header_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 2\n255\n\x00\x01\x02\x03")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0, 1], [2, 3]])


def _pair(tmp_path, image, mask, name="s"):
    write_pgm(tmp_path / f"{name}_i.pgm", image)
    write_pgm(tmp_path / f"{name}_m.pgm", mask)
    return ManifestRow(name, tmp_path / f"{name}_i.pgm", tmp_path / f"{name}_m.pgm", 0, "src")


def test_load_sample_single_blob(tmp_path, rng):
    img = rng.integers(0, 256, (64, 64)).astype(np.uint8)
    mask = np.zeros((64, 64), np.uint8)
    mask[20:40, 10:50] = 255
    s = load_sample(_pair(tmp_path, img, mask))
    np.testing.assert_array_equal(s.image, img)
    assert s.mask.dtype == bool and s.mask.sum() == 800


def test_load_sample_empty_mask(tmp_path):
    row = _pair(tmp_path, np.zeros((32, 32), np.uint8), np.zeros((32, 32), np.uint8))
    with pytest.raises(SampleError, match="empty mask"):
        load_sample(row)


def test_load_sample_keeps_largest_component(tmp_path, caplog):
    mask = np.zeros((64, 64), np.uint8)
    mask[5:25, 5:30] = 255          # 500 px
    mask[50:52, 50:55] = 255        # 10 px
    s = load_sample(_pair(tmp_path, np.full((64, 64), 9, np.uint8), mask))
    assert s.mask.sum() == 500 and not s.mask[50:52, 50:55].any()
    assert "keeping largest" in caplog.text


def test_load_sample_errors(tmp_path):
    with pytest.raises(SampleError, match="mismatch"):
        load_sample(_pair(tmp_path, np.zeros((32, 32), np.uint8), np.full((32, 31), 255, np.uint8)))
    (tmp_path / "bad.pgm").write_bytes(b"garbage")
    row = ManifestRow("bad", tmp_path / "bad.pgm", tmp_path / "bad.pgm", 0, "")
    with pytest.raises(SampleError):
        load_sample(row)
    tiny = np.zeros((32, 32), np.uint8)
    tiny[3:7, 3:7] = 255
    with pytest.raises(SampleError, match="too small"):
        load_sample(_pair(tmp_path, np.zeros((32, 32), np.uint8), tiny, "t"))


def test_png_through_same_loader(tmp_path):
    from PIL import Image

    img = np.arange(32 * 32, dtype=np.uint32).reshape(32, 32).astype(np.uint8)
    mask = np.zeros((32, 32), np.uint8)
    mask[8:24, 8:24] = 255
    Image.fromarray(img).save(tmp_path / "i.png")
    Image.fromarray(mask).save(tmp_path / "m.png")
    s = load_sample(ManifestRow("p", tmp_path / "i.png", tmp_path / "m.png", 1, ""))
    np.testing.assert_array_equal(s.image, img)


# -- split plans -------------------------------------------------------------------


def test_split_protocol_counts():
    samples = protocol_samples()
    plan = make_split_plan(samples, 8, seed=3)
    for k in range(8):
        assert len(plan.ids(k, TEST)) in (93, 94)
        assert abs(len(plan.ids(k, DEV_TRAIN)) - len(plan.ids(k, META_TRAIN))) <= 1
    assert_stratified(plan, samples)


def test_split_sixteen_two_folds():
    plan = make_split_plan([(f"x{i}", 0, "a") for i in range(16)], 2, seed=1)
    for k in range(2):
        assert (len(plan.ids(k, TEST)), len(plan.ids(k, DEV_TRAIN)), len(plan.ids(k, META_TRAIN))) == (8, 4, 4)


def test_split_deterministic_and_seed_sensitive():
    samples = protocol_samples(1, 40, 60)
    a = make_split_plan(samples, 8, seed=11)
    b = make_split_plan(samples, 8, seed=11)
    c = make_split_plan(samples, 8, seed=12)
    assert a.roles == b.roles
    assert a.roles != c.roles


def test_split_each_sample_tested_once():
    plan = make_split_plan(protocol_samples(2, 50, 70), 5, seed=0)
    for sid, roles in plan.roles.items():
        assert roles.count(TEST) == 1
        assert roles[plan.test_fold[sid]] == TEST


@pytest.mark.parametrize("seed", range(12))
def test_split_stratification_random_sizes(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(60, 700))
    k = int(rng.integers(2, 9))
    labels = (rng.random(n) < rng.uniform(0.2, 0.6)).astype(int)
    sources = rng.integers(0, 3, n)
    samples = [(f"r{i}", int(labels[i]), f"s{sources[i]}") for i in range(n)]
    smallest = min(Counter((lab, src) for _, lab, src in samples).values())
    if smallest < k:
        with pytest.raises(SplitError, match="cannot stratify"):
            make_split_plan(samples, k, seed)
        return
    assert_stratified(make_split_plan(samples, k, seed), samples)


def test_split_small_stratum_rejected():
    samples = [(f"a{i}", 0, "x") for i in range(20)] + [("b0", 1, "x"), ("b1", 1, "x")]
    with pytest.raises(SplitError, match="cannot stratify"):
        make_split_plan(samples, 8, 0)
    with pytest.raises(SplitError):
        make_split_plan(samples, 1, 0)


def test_split_json_roundtrip():
    plan = make_split_plan(protocol_samples(3, 20, 20, 2), 4, seed=5)
    d = json.loads(plan.to_json())
    assert d["fold_count"] == 4
    assert {"id", "fold", "role"} == set(d["assignments"][0])
    back = SplitPlan.from_dict(d)
    assert back.roles == plan.roles and back.test_fold == plan.test_fold
