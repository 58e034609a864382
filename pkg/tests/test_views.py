import numpy as np
import pytest
import torch

from trisegnet.data import ImageGrid
from trisegnet.views import (
    ARCHITECTURES,
    VIEW_IDS,
    ModelConfig,
    TripleModel,
    ensemble_predict,
    forward_view,
    init_triple_model,
)


def _model(seed=0, size=32, **kw):
    cfg = ModelConfig(image_size=size, stem_width=8, view_width=8, **kw)
    torch.manual_seed(seed)
    return init_triple_model(cfg, seed)


def _image(seed=0, size=32):
    rng = np.random.default_rng(seed)
    return ImageGrid(rng.random((size, size)))


def test_default_architectures_are_distinct():
    model = _model()
    assert model.architecture_tags == ARCHITECTURES
    counts = [sum(p.numel() for p in v.parameters()) for v in model.views]
    assert len(set(counts)) == 3  # genuinely different decoders


def test_param_counts_stable():
    # frozen so accidental architecture edits get noticed
    model = _model()
    counts = [sum(p.numel() for p in v.parameters()) for v in model.views]
    assert counts == [6513, 3009, 4195]


def test_duplicated_views_warn_and_differ_by_init():
    with pytest.warns(UserWarning, match="duplicate"):
        model = _model(architectures=("skip_connection",) * 3)
    flat = [torch.cat([p.flatten() for p in v.parameters()]) for v in model.views]
    assert not torch.equal(flat[0], flat[1])
    assert not torch.equal(flat[1], flat[2])


def test_output_shape_and_range():
    model = _model()
    x = torch.rand(2, 1, 32, 32)
    for v in range(3):
        with torch.no_grad():
            p = model.view_probs(x, v)
        assert p.shape == (2, 1, 32, 32)
        assert float(p.min()) >= 0.0 and float(p.max()) <= 1.0


def test_eval_forward_is_deterministic():
    model = _model()
    img = _image()
    for v in VIEW_IDS:
        a = forward_view(model, v, img)
        b = forward_view(model, v, img)
        assert np.array_equal(a.pixels, b.pixels)


def test_same_seed_same_model():
    a, b = _model(3), _model(3)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_different_seed_different_model():
    a, b = _model(3), _model(4)
    assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))


def test_view_id_aliases():
    model = _model()
    img = _image()
    by_name = forward_view(model, "B", img)
    by_index = forward_view(model, 1, img)
    assert np.array_equal(by_name.pixels, by_index.pixels)
    with pytest.raises(ValueError):
        forward_view(model, "D", img)


def test_input_size_checked():
    model = _model(size=32)
    with pytest.raises(ValueError):
        forward_view(model, 0, _image(size=64))


def test_image_size_must_be_multiple_of_16():
    with pytest.raises(ValueError):
        ModelConfig(image_size=30)


def test_stem_is_shared():
    # one gradient step through view A must change what views B and C see
    model = _model()
    img = _image()
    before_b = forward_view(model, "B", img).pixels.copy()
    stem_before = model.stem.body[0][0].weight.detach().clone()

    opt = torch.optim.Adam(
        list(model.stem.parameters()) + list(model.views[0].parameters()), lr=1e-2
    )
    x = torch.rand(1, 1, 32, 32)
    loss = model.view_probs(x, 0).mean()
    opt.zero_grad()
    loss.backward()
    opt.step()

    assert not torch.equal(stem_before, model.stem.body[0][0].weight.detach())
    after_b = forward_view(model, "B", img).pixels
    assert not np.array_equal(before_b, after_b)


def test_stem_gradient_nonzero_and_matches_finite_difference():
    model = _model().double()
    x = torch.rand(1, 1, 32, 32, dtype=torch.float64)

    w = model.stem.body[0][0].weight
    out = model.view_probs(x, 0).mean()
    (grad,) = torch.autograd.grad(out, w)
    idx = (0, 0, 1, 1)
    assert grad[idx].item() != 0.0

    h = 1e-6
    with torch.no_grad():
        w[idx] += h
        up = model.view_probs(x, 0).mean().item()
        w[idx] -= 2 * h
        dn = model.view_probs(x, 0).mean().item()
        w[idx] += h
    fd = (up - dn) / (2 * h)
    assert abs(fd - grad[idx].item()) <= 1e-4 * max(abs(fd), 1e-8)


def test_ensemble_is_convex_combination():
    model = _model()
    model.set_alpha((0.5, 0.3, 0.2))
    x = torch.rand(1, 1, 32, 32)
    with torch.no_grad():
        ps = [model.view_probs(x, v) for v in range(3)]
        ens = model.ensemble_probs(x)
    lo = torch.minimum(torch.minimum(ps[0], ps[1]), ps[2])
    hi = torch.maximum(torch.maximum(ps[0], ps[1]), ps[2])
    assert torch.all(ens >= lo - 1e-6) and torch.all(ens <= hi + 1e-6)


def test_ensemble_degenerate_weights_pick_one_view():
    model = _model()
    model.set_alpha((1.0, 0.0, 0.0))
    img = _image()
    ens = ensemble_predict(model, img)
    solo = forward_view(model, 0, img)
    assert np.allclose(ens.pixels, solo.pixels, atol=1e-7)


def test_all_zero_alpha_is_fatal():
    model = _model()
    model.set_alpha((0.0, 0.0, 0.0))
    with pytest.raises(RuntimeError):
        ensemble_predict(model, _image())


def test_set_alpha_validation():
    model = _model()
    with pytest.raises(ValueError):
        model.set_alpha((0.5, 0.5))
    with pytest.raises(ValueError):
        model.set_alpha((-0.1, 0.6, 0.5))


def test_normalized_alpha_sums_to_one():
    model = _model()
    model.set_alpha((0.9, 0.6, 0.6))
    na = model.normalized_alpha()
    assert abs(sum(na) - 1.0) < 1e-9
    assert na[0] == pytest.approx(0.9 / 2.1)


def test_stem_load_pretrained_averages_channels():
    model = _model()
    stem2 = _model(seed=9)
    # fake a 3-channel first conv as from an RGB-pretrained stem
    sd = {k: v.clone() for k, v in stem2.stem.state_dict().items()}
    w = sd["body.0.0.weight"]
    sd["body.0.0.weight"] = w.repeat(1, 3, 1, 1)
    model.stem.load_pretrained(sd)
    got = model.stem.body[0][0].weight
    assert torch.allclose(got, w.repeat(1, 3, 1, 1).mean(dim=1, keepdim=True))
