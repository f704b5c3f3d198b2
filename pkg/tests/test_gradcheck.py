import json

import numpy as np
import pytest

from frontend.service.gradcheck_service import (DIFFISO_RESOLUTION, DIFFISO_STEPS, SUITES, TOLERANCES,
                                                GradcheckService, same_connectivity, stencil_difference)
from geometry.grid import sample_field
from geometry.shapes import AnalyticShape
from marching.cubes import TriMesh, enclosed_volume, marching_cubes


def test_healthy_network_passes(small_network):
    latents = np.random.default_rng(0).normal(scale=0.1, size=(2, 3))
    with GradcheckService(small_network, latents, seed=1) as service:
        report = service.run(("sdfnet", "losses", "shapeopt"))
    assert report["passed"] is True
    for name, suite in report["suites"].items():
        assert suite["checks"] > 0
        assert suite["worst_relative_error"] <= TOLERANCES[name]


def test_nonfinite_network_fails(small_network, tmp_path):
    broken = small_network.copy()
    broken.biases[0][0] = np.nan
    with GradcheckService(broken, np.zeros((1, 3))) as service:
        report = service.run(("sdfnet",))
        path = service.write_report(tmp_path / "report.json", report)

    suite = report["suites"]["sdfnet"]
    assert not report["passed"] and not suite["passed"]
    assert suite["worst_relative_error"] is None
    assert json.loads(path.read_text(encoding="utf-8")) == report


def test_every_suite_has_tolerance():
    assert set(SUITES) == {"sdfnet", "diffiso", "losses", "raster", "shapeopt"}


class TestStencilDifference:
    @staticmethod
    def volume_at(grid):
        def value_and_mesh(z):
            mesh = marching_cubes(sample_field(AnalyticShape.sphere(0.5 + z[0]), grid))
            return enclosed_volume(mesh), mesh
        return value_and_mesh

    def test_rejects_steps_that_change_connectivity(self, grid32):
        fn = self.volume_at(grid32)
        _, base = fn(np.zeros(1))
        numeric, step = stencil_difference(fn, np.zeros(1), base, steps=(0.1, 1e-7))
        assert step == 1e-7
        # dV/dr близко к площади сферы
        assert numeric[0] == pytest.approx(np.pi, rel=0.1)

    def test_none_when_every_step_changes_topology(self, grid32):
        fn = self.volume_at(grid32)
        _, base = fn(np.zeros(1))
        assert stencil_difference(fn, np.zeros(1), base, steps=(0.1, 0.05)) is None

    def test_same_connectivity(self, sphere_mesh, torus_mesh):
        moved = TriMesh(sphere_mesh.vertices * 1.01, sphere_mesh.faces, sphere_mesh.edge_pos,
                        sphere_mesh.edge_neg, sphere_mesh.edge_t)
        assert same_connectivity(sphere_mesh, moved)
        assert not same_connectivity(sphere_mesh, torus_mesh)


def test_diffiso_tolerance_and_resolution():
    assert TOLERANCES["diffiso"] == 2e-2
    assert DIFFISO_RESOLUTION == 64
    assert list(DIFFISO_STEPS) == sorted(DIFFISO_STEPS, reverse=True)
