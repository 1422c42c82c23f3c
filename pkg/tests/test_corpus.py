import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhnet.corpus import (NA, ROOT, Bag, CorpusFormatError, CorpusValidationError, Sentence,
                          SyntheticSpecError, bag_counts, build_taxonomy, generate_synthetic,
                          load_corpus, longtail_subset, parse_relation_path, split_bags,
                          write_corpus)

segment = st.text(alphabet="abcdefgh_", min_size=1, max_size=6)


def test_parse_examples():
    p = parse_relation_path("/people/person/place_of_birth")
    assert p.layers == (ROOT, "/people", "/people/person", "/people/person/place_of_birth")
    assert parse_relation_path("NA").layers == (ROOT, NA, NA, NA)
    assert parse_relation_path("/business/company").layers == (
        ROOT, "/business", "/business/company", "/business/company")
    assert parse_relation_path("/a").layers == (ROOT, "/a", "/a", "/a")


def test_parse_long_label_keeps_two_prefixes_and_leaf():
    p = parse_relation_path("/a/b/c/d")
    assert p.layers == (ROOT, "/a", "/a/b", "/a/b/c/d")


@pytest.mark.parametrize("bad", ["", "people/person", "///"])
def test_parse_rejects(bad):
    with pytest.raises(CorpusFormatError):
        parse_relation_path(bad)


@settings(max_examples=200, deadline=None)
@given(st.lists(segment, min_size=1, max_size=5))
def test_parse_prefix_invariant(parts):
    label = "/" + "/".join(parts)
    p = parse_relation_path(label)
    assert p.layers[0] == ROOT
    assert p.leaf == label
    for upper, lower in zip(p.layers[1:], p.layers[2:]):
        assert lower.startswith(upper)


def test_taxonomy_examples():
    t = build_taxonomy(["/a/b/c", "/a/b/d"])
    assert t.children[(2, "/a/b")] == ["/a/b/c", "/a/b/d"]
    t = build_taxonomy(["/a/b/c"])
    assert all(t.child_count(k, t.paths["/a/b/c"].node(k)) == 1 for k in (2, 3, 4))
    t = build_taxonomy(["/a/b/c", "/x/y/z"])
    assert t.children[(4, ROOT)] == ["/a", "/x"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(segment, min_size=3, max_size=3), min_size=1, max_size=8))
def test_taxonomy_single_path_per_leaf(paths):
    labels = ["/" + "/".join(p) for p in paths] + [NA]
    t = build_taxonomy(labels)
    assert NA not in t.paths
    for label, path in t.paths.items():
        for k in (3, 2, 1):
            assert t.parent[(k, path.node(k))] == path.node(k + 1)
    for k in (4, 3, 2):
        seen = set()
        for n in t.layer_nodes[k]:
            kids = set(t.children[(k, n)])
            assert not kids & seen
            seen |= kids


def test_sentence_and_bag_validation():
    with pytest.raises(CorpusValidationError):
        Sentence(["a", "b"], 1, 1, "h", "t")
    with pytest.raises(CorpusValidationError):
        Sentence(["a"], 0, 1, "h", "t")
    s = Sentence(["a", "b", "c"], 0, 2, "h", "t")
    with pytest.raises(CorpusValidationError):
        Bag("h", "x", "/r", [s])
    with pytest.raises(CorpusValidationError):
        Bag("h", "t", "/r", [s], [True, False])
    with pytest.raises(CorpusValidationError):
        Bag("h", "t", "/r", [])


def _record(h="e1", t="e2", r="/a/b/c", tokens=("x", "y", "z"), hp=0, tp=2):
    return json.dumps({"head_id": h, "tail_id": t, "relation": r, "tokens": list(tokens),
                       "head_pos": hp, "tail_pos": tp})


def test_load_groups_into_bags(tmp_path):
    f = tmp_path / "c.jsonl"
    f.write_text(_record() + "\n" + _record(tokens=("p", "q", "r", "s")) + "\n"
                 + _record(t="e3") + "\n")
    bags = load_corpus(f)
    assert [len(b) for b in bags] == [2, 1]
    assert bags[0].key == ("e1", "e2", "/a/b/c")


def test_load_empty_and_errors(tmp_path):
    f = tmp_path / "c.jsonl"
    f.write_text("")
    assert load_corpus(f) == []
    f.write_text(_record() + "\n" + _record(hp=3, tp=4) + "\n")
    with pytest.raises(CorpusValidationError, match=":2:"):
        load_corpus(f)
    f.write_text("{not json\n")
    with pytest.raises(CorpusFormatError, match=":1:"):
        load_corpus(f)


def test_write_load_roundtrip_with_noise(tmp_path):
    syn = generate_synthetic({"num_entity_pairs": 30, "num_relations": 4,
                              "taxonomy_branching": [2, 1]}, 5)
    f = tmp_path / "c.jsonl"
    write_corpus(syn.bags, f)
    back = load_corpus(f)
    assert [(b.key, [s.tokens for s in b.sentences], b.noise_flags) for b in back] == \
           [(b.key, [s.tokens for s in b.sentences], b.noise_flags) for b in syn.bags]


def test_longtail_examples():
    t = build_taxonomy(["/a/b/r1", "/a/b/r2"], {"/a/b/r1": 50, "/a/b/r2": 150})
    assert longtail_subset(None, t, 100) == {"/a/b/r1"}
    assert longtail_subset(None, t, 200) == {"/a/b/r1", "/a/b/r2"}
    assert longtail_subset(None, t, 0) == set()


def test_synthetic_noise_counts():
    clean = generate_synthetic({"num_entity_pairs": 40, "num_relations": 4,
                                "taxonomy_branching": [2, 1], "noise_rate": 0.0}, 1)
    assert not any(f for b in clean.bags for f in b.noise_flags)
    half = generate_synthetic({"num_entity_pairs": 40, "num_relations": 4,
                               "taxonomy_branching": [2, 1], "noise_rate": 0.5,
                               "bag_size_range": [10, 10]}, 1)
    assert all(sum(b.noise_flags) == 5 for b in half.bags)


def test_synthetic_deterministic_and_shaped():
    spec = {"num_entity_pairs": 300, "num_relations": 12, "taxonomy_branching": [3, 2]}
    a = generate_synthetic(spec, 42)
    b = generate_synthetic(spec, 42)
    assert [(x.key, [s.tokens for s in x.sentences], x.noise_flags) for x in a.bags] == \
           [(x.key, [s.tokens for s in x.sentences], x.noise_flags) for x in b.bags]
    assert all(np.array_equal(a.gold.relations[k], b.gold.relations[k]) for k in a.gold.relations)
    assert len(a.bags) == 300
    assert len(a.taxonomy.leaves) == 12
    assert len(a.taxonomy.children[(4, ROOT)]) == 3
    counts = sorted(bag_counts(a.bags).values(), reverse=True)
    assert counts[0] > 4 * counts[-1]


def test_synthetic_gold_is_translational():
    syn = generate_synthetic({"num_entity_pairs": 50, "num_relations": 4,
                              "taxonomy_branching": [2, 1]}, 9)
    ent, rel = syn.gold.entities, syn.gold.relations
    for b in syn.bags:
        assert np.linalg.norm(ent[b.tail_id] - ent[b.head_id] - rel[b.relation]) <= 0.05 + 1e-12


@pytest.mark.parametrize("spec", [{"noise_rate": 1.0}, {"longtail_exponent": 0},
                                  {"num_relations": 5}, {"unknown": 1}])
def test_synthetic_rejects_bad_spec(spec):
    with pytest.raises(SyntheticSpecError):
        generate_synthetic(spec, 0)


def test_split_keeps_every_relation_on_both_sides():
    syn = generate_synthetic({"num_entity_pairs": 200, "num_relations": 6,
                              "taxonomy_branching": [2, 1]}, 3)
    train, test = split_bags(syn.bags, 0.2, 3)
    assert len(train) + len(test) == 200
    assert set(bag_counts(train)) == set(bag_counts(test)) == set(syn.taxonomy.leaves)
