import numpy as np
import pytest

from refloc.geometry import Side, parse_hyperplane, side_of
from refloc.instances import (InstanceFile, InstanceFormatError, MissingDataError, PointRecord, Xoshiro256,
                              dataset_names, dump, dumps, embedded_dataset, from_instance, generate_random, load,
                              load_file, parse_instance)
from refloc.norms import NormSpec

GOOD = """schema_version 1
name tiny
dim 2
hyperplane y=3/2x   # the example line
norm_a lp:2/1
norm_b lp:3/1
norm_h linf:1/4
points 3
auto 1 1 2
A 2.5 2 3
B 1/2 9 1
"""


def test_parse_good():
    f = parse_instance(GOOD)
    assert f.name == "tiny" and f.dim == 2 and len(f.points) == 3
    assert f.points[2].weight == 0.5 and f.norms["h"] == NormSpec.linf(0.25)
    inst = f.to_instance()
    assert len(inst.points_A) == 2 and len(inst.points_B) == 1   # (2,3) lies on H, labelled A


@pytest.mark.parametrize("bad,msg", [
    (GOOD.replace("lp:3/1", "lp:3/3"), "line 6"),
    (GOOD.replace("schema_version 1", "schema_version 2"), "schema_version"),
    (GOOD.replace("points 3", "points 4"), "expected 4 points"),
    (GOOD.replace("B 1/2 9 1", "B -1 9 1"), "weight"),
    (GOOD.replace("B 1/2 9 1", "C 1 9 1"), "unknown set"),
    (GOOD.replace("B 1/2 9 1", "B 1 9"), "coordinates"),
    (GOOD.replace("dim 2", "dim 3"), "line 9: expected <set> <weight> and 3 coordinates"),
    (GOOD.replace("name tiny", "colour red"), "unknown field"),
    (GOOD.replace("hyperplane y=3/2x", "hyperplane alpha=0,0;beta=1"), "line 4"),
    (GOOD.replace("norm_a lp:2/1\n", ""), "norm_a"),
])
def test_parse_errors(bad, msg):
    with pytest.raises(InstanceFormatError, match=msg):
        parse_instance(bad)


def test_contradicting_label():
    f = parse_instance(GOOD.replace("B 1/2 9 1", "A 1 9 1"))
    with pytest.raises(InstanceFormatError, match="point 3 is labelled A"):
        f.to_instance()


def test_round_trip(tmp_path, rng):
    f = parse_instance(GOOD)
    f.points.append(PointRecord(tuple(rng.normal(size=2)), float(rng.uniform(0.1, 3)), "auto"))
    f.points[-1] = PointRecord(f.points[-1].coords, f.points[-1].weight,
                               "B" if side_of(f.hyperplane, f.points[-1].coords) == Side.B else "A")
    path = tmp_path / "x.txt"
    dump(f, path)
    g = load_file(path)
    assert g == f
    assert dumps(g) == dumps(f)
    inst = load(path)
    assert dumps(from_instance(inst)).count("\n") == dumps(f).count("\n")


def test_poly_norm_needs_a_file(tmp_path):
    gen = tmp_path / "g.txt"
    gen.write_text("1 0\n-1 0\n0 1\n0 -1\n1 1\n-1 -1\n")
    (tmp_path / "i.txt").write_text(GOOD.replace("lp:3/1", "poly:g.txt:2"))
    f = load_file(tmp_path / "i.txt")
    assert f.norms["b"].kind == "poly" and f.norms["b"].scale == 2
    f.norms["b"] = NormSpec.polyhedral([[1, 0], [-1, 0]])
    with pytest.raises(InstanceFormatError):
        dumps(f)


def test_parlar18():
    f = embedded_dataset("parlar18")
    assert len(f.points) == 18 and all(p.weight == 1.0 for p in f.points)
    assert f.points[0].coords == (1.0, 2.0)
    inst = f.to_instance()
    assert (len(inst.points_A), len(inst.points_B)) == (4, 14)
    assert tuple(inst.points_A[0].coords) == (1.0, 2.0)
    f.hyperplane = parse_hyperplane("y=x")
    inst = f.to_instance()
    expect_A = sum(side_of(f.hyperplane, p.coords) != Side.B for p in f.points)
    assert len(inst.points_A) == expect_A and inst.n_points == 18


def test_external_datasets(tmp_path, monkeypatch):
    monkeypatch.delenv("REFLOC_DATA", raising=False)
    assert {"parlar18", "parlar4", "zaferanieh30"} <= set(dataset_names())
    with pytest.raises(MissingDataError, match="not bundled"):
        embedded_dataset("parlar4")
    with pytest.raises(MissingDataError, match="unknown dataset"):
        embedded_dataset("nope")
    (tmp_path / "parlar4.txt").write_text(GOOD)
    assert embedded_dataset("parlar4", tmp_path).name == "tiny"
    monkeypatch.setenv("REFLOC_DATA", str(tmp_path))
    assert len(embedded_dataset("parlar4").points) == 3


def test_xoshiro_reference_stream():
    # splitmix64 seeding of 0 gives the published first output 0xe220a8397b1dcdaf
    r = Xoshiro256(0)
    assert r.s[0] == 0xE220A8397B1DCDAF
    first = [Xoshiro256(7).next() for _ in range(2)]
    assert first[0] == first[1]
    u = Xoshiro256(1).random(1000)
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.05


def test_generate_random():
    f = generate_random(5000, 2, 1)
    c = np.array([p.coords for p in f.points])
    assert c.shape == (5000, 2) and c.min() >= 0 and c.max() <= 1
    assert dumps(generate_random(1, 5, 7)) == dumps(generate_random(1, 5, 7))
    assert dumps(generate_random(3, 2, 1)) != dumps(generate_random(3, 2, 2))
    inst = generate_random(10_000, 3, 3).to_instance()
    assert inst.points_A and inst.points_B and inst.n_points == 10_000
    np.testing.assert_array_equal(inst.hyperplane.alpha, [0, 0, 1])
    assert inst.hyperplane.beta == 0.5
    for bad in ((0, 2), (5, 1)):
        with pytest.raises(ValueError):
            generate_random(*bad, seed=1)


def test_explicit_labels_on_the_hyperplane():
    f = InstanceFile(2, parse_hyperplane("y=x"), {"a": NormSpec.lp(2), "b": NormSpec.lp(2)},
                     [PointRecord((1.0, 1.0), 1.0, "B"), PointRecord((0.0, 1.0), 1.0, "auto")])
    A, B = f.classified()
    assert len(A) == 1 and len(B) == 1 and tuple(B[0].coords) == (1.0, 1.0)
