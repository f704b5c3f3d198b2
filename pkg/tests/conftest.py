import numpy as np
import pytest

from geometry.grid import Grid3D, sample_field
from geometry.sampling import build_dataset
from geometry.shapes import AnalyticShape, shape_family
from marching.cubes import marching_cubes
from sdfnet.checkpoint import save_checkpoint
from sdfnet.network import NetworkConfig, SdfNetwork, init_network
from sdfnet.training import TrainConfig, train_sdf


def bowl_network(latent_weights=(0.3, -0.2), sharpness: float = 4.0, radius: float = 0.5) -> SdfNetwork:
    """
    Сеть с одним скрытым слоем, собранная вручную:
    f(x, z) = k * (sum_i [sp(w x_i) + sp(-w x_i)] - C) + k * a . z.
    Нулевой уровень при z = 0 - выпуклая замкнутая поверхность через (radius, 0, 0).
    """
    latent = np.asarray(latent_weights, dtype=np.float64)
    Z = len(latent)
    config = NetworkConfig(latent_dim=Z, hidden_dims=(6,), skip_layer=1)

    w0 = np.zeros((6, 3 + Z))
    for axis in range(3):
        w0[2 * axis, axis] = sharpness
        w0[2 * axis + 1, axis] = -sharpness

    def pair(t: float) -> float:
        return float(np.log(2.0 + 2.0 * np.cosh(t)))

    level = pair(sharpness * radius) + 2.0 * pair(0.0)
    k = 1.0 / (sharpness * np.tanh(0.5 * sharpness * radius))
    w1 = np.concatenate([np.full(6, k), np.zeros(3), k * latent]).reshape(1, -1)
    return SdfNetwork(config, [w0, w1], [np.zeros(6), np.array([-k * level])])


@pytest.fixture
def sphere():
    return AnalyticShape.sphere(0.5)


@pytest.fixture
def torus():
    return AnalyticShape.torus(0.5, 0.2)


@pytest.fixture
def grid32():
    return Grid3D(resolution=32)


@pytest.fixture
def sphere_mesh(sphere, grid32):
    return marching_cubes(sample_field(sphere, grid32))


@pytest.fixture
def torus_mesh(torus):
    return marching_cubes(sample_field(torus, Grid3D(resolution=48)))


@pytest.fixture
def small_network():
    return init_network(NetworkConfig(latent_dim=3, hidden_dims=(16, 16), skip_layer=1), seed=0)


@pytest.fixture
def bowl():
    return bowl_network()


@pytest.fixture(scope="session")
def trained_family():
    """Сеть, обученная на одной сфере и одном торе (Z=4); только для медленных тестов."""
    shapes = [AnalyticShape.sphere(0.35)] + shape_family(0, 1, seed=0)
    dataset = build_dataset(shapes, n_surface=4000, n_uniform=1000, seed=0)
    cfg = TrainConfig(steps=3000, batch_size=2048, learning_rate=1e-3, seed=0)
    network_config = NetworkConfig(latent_dim=4, hidden_dims=(64, 64, 64), skip_layer=2)
    result = train_sdf(dataset, cfg, network_config=network_config, num_shapes=len(shapes))
    return result.network, result.latents, shapes


@pytest.fixture(scope="session")
def family_checkpoint(trained_family, tmp_path_factory):
    """Чекпоинт trained_family на диске для сервисных тестов."""
    net, latents, _ = trained_family
    return save_checkpoint(tmp_path_factory.mktemp("family") / "checkpoint.json", net, latents)
