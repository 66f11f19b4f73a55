import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energon.core import (
    DatasetError,
    Family,
    Label,
    Modality,
    NoiseScenario,
    REGISTRY,
    Source,
    Trace,
    TraceDataset,
    TraceFormatError,
    TraceMeta,
    UnknownModelError,
    expected_length,
    format_trace,
    get_taxonomy,
    parse_trace,
    read_dataset,
    read_trace,
    registry_lookup,
    split_holdout,
    validate_trace,
    write_dataset,
    write_trace,
)
from energon.core.registry import CUSTOM_MODELS, LANGUAGE_MODELS, VISION_MODELS
from energon.core.taxonomy import config_for
from energon.core.types import Background


def make_trace(n=840, name="t5-small", seed=0, power=None, temp=None):
    cfg = registry_lookup(name)
    p = np.full(n, 10.0) if power is None else power
    t = np.full(n, 30.0) if temp is None else temp
    return Trace(p, t, TraceMeta(label=cfg.label(), seed=seed), 7.0, n / 7.0)


# -- registry -----------------------------------------------------------------

LANGUAGE_ROWS = [
    ("t5-small", Family.T5, 6, 8, 512),
    ("t5-base", Family.T5, 12, 12, 768),
    ("t5-large", Family.T5, 24, 16, 1024),
    ("t5-3b", Family.T5, 24, 32, 1024),
    ("Helsinki-NLP/opus-mt-en-fr", Family.MarianMT, 6, 8, 512),
    ("facebook/nllb-200-distilled-600M", Family.META, 12, 16, 1024),
    ("facebook/nllb-200-distilled-1.3B", Family.META, 24, 16, 1024),
    ("google/madlad400-3b-mt", Family.GoogleLang, 32, 16, 1024),
]

VISION_ROWS = [
    ("google/vit-base-patch16-224", Family.GoogleViT, 12, 12, 768),
    ("google/vit-large-patch16-225", Family.GoogleViT, 24, 16, 1024),
    ("apple/mobilevit-small", Family.AppleViT, 12, 4, 384),
    ("facebook/deit-tiny-distilled-patch16-224", Family.MetaViT, 12, 3, 192),
    ("facebook/deit-small-distilled-patch16-224", Family.MetaViT, 12, 6, 384),
    ("facebook/deit-base-distilled-patch16-224", Family.MetaViT, 12, 12, 768),
    ("microsoft/swin-tiny-patch4-window7-224", Family.MicrosoftViT, 12, 3, 96),
    ("microsoft/swin-base-patch4-window7-224", Family.MicrosoftViT, 12, 12, 768),
]

CUSTOM_ROWS = [(6, 8), (12, 8), (12, 12), (12, 16), (24, 16), (32, 16), (48, 16), (24, 32), (32, 32)]


def test_registry_size():
    assert len(LANGUAGE_MODELS) == 8 and len(VISION_MODELS) == 8 and len(CUSTOM_MODELS) == 9
    assert len(REGISTRY) == 25


@pytest.mark.parametrize("name,family,layers,heads,dim", LANGUAGE_ROWS)
def test_language_rows(name, family, layers, heads, dim):
    cfg = registry_lookup(name)
    assert (cfg.family, cfg.modality, cfg.encoders, cfg.decoders, cfg.attention_heads, cfg.embedding_dim) == (
        family, Modality.language, layers, layers, heads, dim)


@pytest.mark.parametrize("name,family,layers,heads,dim", VISION_ROWS)
def test_vision_rows(name, family, layers, heads, dim):
    cfg = registry_lookup(name)
    assert (cfg.family, cfg.modality, cfg.encoders, cfg.decoders, cfg.attention_heads, cfg.embedding_dim) == (
        family, Modality.vision, layers, 0, heads, dim)


@pytest.mark.parametrize("layers,heads", CUSTOM_ROWS)
def test_custom_rows(layers, heads):
    cfg = registry_lookup(f"custom-{layers}/{heads}")
    assert (cfg.family, cfg.encoders, cfg.decoders, cfg.attention_heads, cfg.embedding_dim) == (
        Family.Custom, layers, layers, heads, 512)


def test_lookup_examples():
    cfg = registry_lookup("t5-small")
    assert (cfg.family, cfg.encoders, cfg.decoders, cfg.attention_heads, cfg.embedding_dim) == (Family.T5, 6, 6, 8, 512)
    vit = registry_lookup("google/vit-large")
    assert (vit.family, vit.modality, vit.encoders, vit.decoders, vit.attention_heads, vit.embedding_dim) == (
        Family.GoogleViT, Modality.vision, 24, 0, 16, 1024)


def test_unknown_model_lists_registered_names():
    with pytest.raises(UnknownModelError) as exc:
        registry_lookup("no-such-model")
    assert "t5-small" in str(exc.value)


def test_vision_config_rejects_decoders():
    from energon.core.types import ModelConfig

    with pytest.raises(ValueError):
        ModelConfig(Family.GoogleViT, Modality.vision, 12, 1, 12, 768, "bad")


def test_language_registry_is_symmetric():
    for cfg in REGISTRY.values():
        if not cfg.is_vision:
            assert cfg.encoders == cfg.decoders


# -- labels and scenarios -----------------------------------------------------

def test_label_round_trip():
    lab = registry_lookup("facebook/nllb-200-distilled-600M").label()
    assert Label.decode(lab.encode()) == lab


def test_scenario_parse_aliases():
    assert NoiseScenario.parse("matmul,cnn,vit").background == (
        Background.matmul, Background.cnn_classify, Background.vit_inference)
    assert NoiseScenario.parse("clean").is_clean
    assert NoiseScenario.parse("").count == 0
    assert str(NoiseScenario.repeat("matmul", 2)) == "matmul,matmul"
    with pytest.raises(ValueError):
        NoiseScenario.parse("bitcoin")
    with pytest.raises(ValueError):
        NoiseScenario.repeat("matmul", 9)


def test_synthetic_meta_requires_seed():
    with pytest.raises(ValueError):
        TraceMeta(source=Source.synthetic)
    TraceMeta(source=Source.live)


def test_trace_arrays_are_read_only():
    t = make_trace()
    with pytest.raises(ValueError):
        t.power_w[0] = 1.0


# -- validation ---------------------------------------------------------------

def test_validate_ok():
    assert validate_trace(make_trace()) == []


def test_validate_length_mismatch():
    t = Trace(np.ones(840), np.full(839, 30.0), TraceMeta(seed=0))
    assert "length-mismatch" in [v.code for v in validate_trace(t)]


def test_validate_negative_power():
    p = np.ones(840)
    p[17] = -3.0
    codes = [v.code for v in validate_trace(make_trace(power=p))]
    assert codes == ["negative-power"]


def test_validate_temperature_bounds_and_timing():
    t = make_trace(temp=np.full(840, 200.0))
    assert [v.code for v in validate_trace(t)] == ["temp-bounds"]
    short = Trace(np.ones(10), np.ones(10), TraceMeta(seed=0), 7.0, 120.0)
    assert [v.code for v in validate_trace(short)] == ["length-timing"]


def test_expected_length_rounds_half_up():
    assert expected_length(7, 120) == 840
    assert expected_length(2.5, 1) == 3
    assert expected_length(1.5, 1) == 2


# -- trace files --------------------------------------------------------------

def test_trace_file_round_trip_is_byte_exact(tmp_path, t5_small_trace):
    path = write_trace(t5_small_trace, tmp_path / "a.txt")
    text = path.read_text()
    again = read_trace(path)
    assert format_trace(again) == text
    assert again.label == t5_small_trace.label
    assert np.allclose(again.power_w, t5_small_trace.power_w, atol=5e-7)


def test_trace_file_layout(t5_small_trace):
    lines = format_trace(t5_small_trace).splitlines()
    assert lines[0] == "# sample_rate_hz=7.0"
    assert lines[5] == "# label=T5|t5-small|8|6"
    first = lines[11].split(",")
    assert first[0] == "0.000000" and all(len(c.split(".")[1]) == 6 for c in first)
    assert len(lines) == 11 + 840


def test_parse_errors():
    with pytest.raises(TraceFormatError, match="missing header"):
        parse_trace("0.0,1.0,2.0\n")
    with pytest.raises(TraceFormatError, match="3 columns"):
        parse_trace("# sample_rate_hz=7.0\n0.0,1.0\n")


# -- datasets -----------------------------------------------------------------

def dataset_of(counts: dict, seed=0, fraction=0.2) -> TraceDataset:
    traces = []
    for name, n in counts.items():
        traces += [make_trace(n=7, name=name, seed=i) for i in range(n)]
    return TraceDataset(tuple(traces), seed, fraction)


def test_split_holdout_80_20():
    d = dataset_of({"t5-small": 100, "t5-base": 100})
    train, test = split_holdout(d)
    assert train.class_counts() == {"t5-small": 80, "t5-base": 80}
    assert test.class_counts() == {"t5-small": 20, "t5-base": 20}


def test_split_holdout_minimum_one_each():
    train, test = split_holdout(dataset_of({"t5-small": 2, "t5-base": 2}))
    assert train.class_counts() == test.class_counts() == {"t5-small": 1, "t5-base": 1}


def test_split_holdout_deterministic():
    d = dataset_of({"t5-small": 30, "t5-base": 17}, seed=5)
    a, b = split_holdout(d), split_holdout(d)
    assert a[1].digest() == b[1].digest()


def test_split_holdout_rejects_singletons():
    with pytest.raises(DatasetError):
        split_holdout(dataset_of({"t5-small": 1}))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 12), min_size=1, max_size=3), st.integers(0, 2**32 - 1),
       st.floats(0.05, 0.95))
def test_split_holdout_is_partition(sizes, seed, fraction):
    names = ["t5-small", "t5-base", "t5-large"]
    d = dataset_of(dict(zip(names, sizes)), seed, fraction)
    train, test = split_holdout(d)
    ids = lambda ds: sorted((t.label.model_name, t.meta.seed) for t in ds)
    assert len(train) + len(test) == len(d)
    assert not set(ids(train)) & set(ids(test))
    assert sorted(ids(train) + ids(test)) == ids(d)
    for name, n in test.class_counts().items():
        assert 1 <= n <= d.class_counts()[name] - 1


def test_dataset_directory_round_trip(tmp_path):
    d = dataset_of({"t5-small": 3, "t5-base": 2})
    write_dataset(d, tmp_path)
    manifest = (tmp_path / "manifest").read_text().splitlines()
    assert manifest[0] == "traces/trace_00000.txt\tT5\tt5-small"
    back = read_dataset(tmp_path)
    assert back.digest() == d.digest()


def test_dataset_requires_labels():
    with pytest.raises(DatasetError):
        TraceDataset((Trace(np.ones(3), np.ones(3), TraceMeta(seed=0)),))


# -- taxonomy -----------------------------------------------------------------

@pytest.mark.parametrize("name", ["language", "vision", "custom"])
def test_taxonomy_paths_are_unique(name):
    tax = get_taxonomy(name)
    leaves = [l.model_name for l in tax.leaves]
    assert sorted(tax.root.leaves) == sorted(leaves)
    for leaf in leaves:
        root_hits = [c for c, m in zip(tax.root.classes, tax.root.members) if leaf in m]
        assert len(root_hits) == 1
        later = [s for s in tax.stages[1:] if s.covers(leaf)]
        assert len(later) <= 1
        if later:
            assert later[0].parent == root_hits[0]
        assert config_for(tax.leaf(leaf)).name == leaf
    for s in tax.stages[1:]:
        parent_members = tax.root.members[tax.root.classes.index(s.parent)]
        assert sorted(s.leaves) == sorted(parent_members)


def test_taxonomy_shapes():
    lang = get_taxonomy("language")
    assert lang.root.classes == ("T5", "MarianMT", "META", "GoogleLang")
    assert lang.stage("T5:heads").classes == ("heads=8", "heads=12", "heads=16", "heads=32")
    assert lang.stage("META:layers").classes == ("layers=12", "layers=24")
    custom = get_taxonomy("custom")
    assert custom.root.classes == ("heads=8", "heads=12", "heads=16", "heads=32")
    assert custom.stage("heads=16:layers").n_classes == 4
    assert custom.path("custom-24/16") == [("heads", "heads=16"), ("heads=16:layers", "layers=24")]
    with pytest.raises(KeyError):
        get_taxonomy("audio")
