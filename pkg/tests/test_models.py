import numpy as np
import pytest

from pivegan import models
from pivegan.autodiff import MlpNet, Tape, forward
from pivegan.autodiff import tape as ad
from pivegan.autodiff.nn import Jet2
from pivegan.exceptions import NotBoundaryPoint, ShapeMismatch
from pivegan.gradcheck import fd_derivative
from pivegan.randproc import SensorLayout, uniform_sensors

from conftest import naive_forward, small_net

SDE_LAYOUT = SensorLayout(coords_k=(-0.5, 0.5), coords_u=(0.1,), coords_f=(-0.6, 0.0, 0.7), coords_b=(-1.0, 1.0))


def _bundle(layout=SDE_LAYOUT, mode="sde", d=2, seed=0):
    rng = np.random.default_rng(seed)
    b = models.build_bundle(layout, rng, latent_dim=d, mode=mode, encoder_hidden=(6,), generator_hidden=(7, 7), discriminator_hidden=(5,))
    for net in b.nets().values():
        for bias in net.biases:
            bias[...] = rng.uniform(-0.3, 0.3, bias.shape)
    return b


def _zero(bundle):
    for net in bundle.nets().values():
        for p in net.params():
            p[...] = 0.0
    return bundle


def test_zero_encoder():
    b = _zero(_bundle())
    enc = models.encode(b, np.ones((3, SDE_LAYOUT.n_total)))
    assert np.all(enc.mu == 0) and np.all(enc.log_sigma == 0) and np.all(ad.value(enc.sigma) == 1)


def test_encoder_matches_naive_and_shape_check():
    b = _bundle()
    row = np.random.default_rng(1).standard_normal(SDE_LAYOUT.n_total)
    enc = models.encode(b, row[None, :])
    ref = naive_forward(b.encoder, row)
    assert np.allclose(np.concatenate([enc.mu[0], enc.log_sigma[0]]), ref, rtol=0, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        models.encode(b, np.ones((1, 3)))


def test_encoder_independent_input_zero_gradient():
    b = _bundle()
    b.encoder.weights[0][2, :] = 0.0
    tape = Tape()
    x = tape.leaf(np.ones((1, SDE_LAYOUT.n_total)))
    enc = models.encode(b, x)
    g = tape.backward(ad.sum(enc.mu), wrt=[x])[x]
    assert np.all(g[:, 2] == 0)


def test_reparameterize_cases():
    mu = np.array([[1.0, 2.0]])
    enc = models.EncoderOut(mu, np.zeros((1, 2)))
    assert np.array_equal(ad.value(models.reparameterize(enc, np.zeros((1, 2))).z), mu)
    assert np.array_equal(ad.value(models.reparameterize(enc, np.array([[0.5, -0.5]])).z), [[1.5, 1.5]])
    xi = np.array([[0.3, -1.2]])
    enc0 = models.EncoderOut(np.zeros((1, 2)), np.zeros((1, 2)))
    assert np.array_equal(ad.value(models.reparameterize(enc0, xi).z), xi)
    with pytest.raises(ShapeMismatch):
        models.reparameterize(enc0, np.zeros((1, 3)))


def test_reparameterize_partials():
    tape = Tape()
    mu = tape.leaf(np.array([[0.2, -0.4]]))
    ls = tape.leaf(np.array([[0.1, -0.3]]))
    xi = np.array([[0.7, 1.1]])
    z = models.reparameterize(models.EncoderOut(mu, ls), xi).z
    g = tape.backward(ad.sum(z), wrt=[mu, ls])
    assert np.array_equal(g[mu], np.ones((1, 2)))
    assert np.allclose(g[ls], np.exp(ls.value) * xi, rtol=1e-15)


def test_gen_eval_zero_and_identity():
    net = MlpNet((3, 1))
    jet = models.gen_eval(net, 0.4, np.zeros(2))
    assert jet.v[0, 0] == jet.dx[0, 0] == jet.dxx[0, 0] == 0
    ident = MlpNet((3, 1), [np.array([[1.0], [0.0], [0.0]])], [np.zeros(1)])
    jet = models.gen_eval(ident, 0.4, np.array([1.0, -2.0]))
    assert (jet.v[0, 0], jet.dx[0, 0], jet.dxx[0, 0]) == (0.4, 1.0, 0.0)


def test_gen_eval_fd():
    net = _bundle().gen_u
    z = np.array([0.3, -0.8])
    x0 = 0.25
    f = lambda t: forward(net, np.concatenate([np.asarray([t], dtype=np.longdouble), z.astype(np.longdouble)]))[0]
    jet = models.gen_eval(net, x0, z)
    assert abs(jet.dx[0, 0] - fd_derivative(f, x0, 1e-3, 1)) <= 1e-6 * abs(jet.dx[0, 0])
    assert abs(jet.dxx[0, 0] - fd_derivative(f, x0, 1e-3, 2)) <= 1e-6 * abs(jet.dxx[0, 0])


def test_physics_residual_cases():
    assert models.physics_residual(Jet2(2.0, 0.0, 0.0), Jet2(0.0, 0.0, 3.0)) == pytest.approx(-0.6, abs=1e-15)
    assert models.physics_residual(Jet2(1.3, 0.2, 0.0), Jet2(5.0, 0.0, 0.0)) == 0.0
    # k = 2 + x and u = 1 - x^2 at x = 0.5
    assert models.physics_residual(Jet2(2.5, 1.0, 0.0), Jet2(0.75, -1.0, -2.0)) == pytest.approx(0.6, abs=1e-15)


def test_physics_residual_homogeneous():
    rng = np.random.default_rng(3)
    k = Jet2(*rng.standard_normal(3))
    u = Jet2(*rng.standard_normal(3))
    a = 1.7
    ka = Jet2(a * k.v, a * k.dx, a * k.dxx)
    assert models.physics_residual(ka, u) == pytest.approx(a * models.physics_residual(k, u), rel=1e-14)


def test_boundary_value():
    b = _bundle()
    z = np.array([[0.2, 0.1]])
    jet = models.gen_eval(b.gen_u, -1.0, z)
    assert models.boundary_value(jet, -1.0) is jet.v
    with pytest.raises(NotBoundaryPoint):
        models.boundary_value(jet, 0.5)


def test_boundary_zero_generator():
    b = _bundle()
    for p in b.gen_u.params():
        p[...] = 0.0
    fake = models.assemble_fake(b, np.random.default_rng(0).standard_normal((4, 2)))
    assert np.all(fake.B == 0)


def test_boundary_block_equals_generator_values():
    b = _bundle()
    z = np.random.default_rng(1).standard_normal((3, 2))
    fake = models.assemble_fake(b, z)
    ref = models.gen_eval(b.gen_u, [-1.0, 1.0], z).v
    assert np.array_equal(fake.B, ref)


def test_assemble_forward_layout_empty_u():
    lay = SensorLayout(coords_k=tuple(uniform_sensors(13)), coords_f=tuple(uniform_sensors(21)), coords_b=(-1.0, 1.0))
    b = _bundle(lay)
    fake = models.assemble_fake(b, np.zeros((2, 2)))
    assert fake.U.shape == (2, 0)
    assert ad.value(fake.vector).shape == (2, 36)


def test_assemble_process_mode():
    lay = SensorLayout(coords_f=tuple(uniform_sensors(6)))
    b = _bundle(lay, mode="process")
    fake = models.assemble_fake(b, np.ones((3, 2)))
    assert fake.F.shape == (3, 6) and b.gen_k is None


def test_assemble_recomputation_oracle():
    b = _bundle()
    z = np.random.default_rng(2).standard_normal((3, 2))
    fake = models.assemble_fake(b, z)
    for j in range(3):
        for i, x in enumerate(SDE_LAYOUT.coords_f):
            kj = models.gen_eval(b.gen_k, x, z[j])
            uj = models.gen_eval(b.gen_u, x, z[j])
            assert fake.F[j, i] == pytest.approx(models.physics_residual(kj, uj)[0, 0], abs=1e-15)
        for i, x in enumerate(SDE_LAYOUT.coords_k):
            assert fake.K[j, i] == pytest.approx(models.gen_eval(b.gen_k, x, z[j]).v[0, 0], abs=1e-15)


def test_discriminator_cases():
    b = _zero(_bundle())
    assert np.all(models.discriminate(b, np.ones((2, SDE_LAYOUT.n_total))) == 0)
    w = np.arange(1.0, SDE_LAYOUT.n_total + 1)
    lin = MlpNet((SDE_LAYOUT.n_total, 1), [w[:, None]], [np.zeros(1)])
    b2 = models.ModelBundle(b.encoder, lin, b.generators, b.latent_dim, b.layout)
    y = np.random.default_rng(0).standard_normal(SDE_LAYOUT.n_total)
    c = 0.3
    diff = models.discriminate(b2, (y + c * w)[None, :]) - models.discriminate(b2, y[None, :])
    assert diff[0] == pytest.approx(c * w @ w, rel=1e-14)


def test_discriminator_naive_and_shape():
    b = _bundle()
    y = np.random.default_rng(4).standard_normal(SDE_LAYOUT.n_total)
    assert abs(models.discriminate(b, y[None, :])[0] - naive_forward(b.discriminator, y)[0]) <= 1e-15
    with pytest.raises(ShapeMismatch):
        models.discriminate(b, np.ones((1, 2)))


def test_bundle_width_validation():
    b = _bundle()
    with pytest.raises(ShapeMismatch):
        models.ModelBundle(b.encoder, b.discriminator, {"f": b.gen_u}, 2, SDE_LAYOUT, "sde")
    with pytest.raises(ShapeMismatch):
        models.ModelBundle(small_net(np.random.default_rng(0), (3, 4)), b.discriminator, b.generators, 2, SDE_LAYOUT)
