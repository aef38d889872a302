"""
End-to-end checks for the near-field depth evaluation system
"""

import tempfile
from pathlib import Path

import numpy as np

from simulator import SyntheticSceneSimulator
from models import FscwConfig, VoxelGridSpec
from dataset_io import load_capture_manifest, load_erosion_metadata
from radar_signal import simulate_fscw
from radar_imaging import image_scene
from metrics import evaluate_manifest, write_results
from analysis import DepthResultAnalyzer, object_statistics
from resolution import QAR5, mimo_resolution


def test_radar_imaging():
    """Test simulate -> backproject -> filter on random point scenes"""
    print("Testing Radar Imaging...")

    sim = SyntheticSceneSimulator(seed=11)
    array = sim.create_sample_array(n_per_edge=4)
    targets = sim.create_point_targets(3)
    cube = simulate_fscw(targets, array, FscwConfig(72e9, 82e9, 16))

    spec = VoxelGridSpec((-0.03, -0.03, 0.27), (0.003, 0.003, 0.003), (21, 21, 21))
    depth, confidence = image_scene(cube, spec)

    print(f"✓ Scatterers: {len(targets)}")
    print(f"✓ Peak confidence: {confidence.max():.1f}")
    print(f"✓ Kept pixels at -14 dB: {int(depth.valid_mask().sum())} of {depth.data.size}")

    assert depth.valid_mask().any(), "Filtered depth map should keep the strongest pixels"
    print("✓ Radar imaging test passed!\n")


def test_metric_pipeline():
    """Test the C1/C2/P1/P2 evaluation on the synthetic demo dataset"""
    print("Testing Metric Pipeline...")

    with tempfile.TemporaryDirectory() as tmp:
        manifest_path = SyntheticSceneSimulator(seed=3).build_demo_dataset(Path(tmp) / "demo")
        manifest = load_capture_manifest(manifest_path)
        erosion = load_erosion_metadata(manifest_path.parent / "erosion.json")
        reports = evaluate_manifest(manifest, erosion)
        objects = object_statistics(manifest)
        json_path, csv_path = write_results(reports, Path(tmp) / "out", objects)

        for report in reports[:4]:
            c1 = report.metrics["C1"]
            print(f"  - {report.object_id} / {report.sensor_id} @ {report.distance_cm} cm: "
                  f"C1 {c1.mean_cm:.3f} ± {c1.std_cm:.3f} cm")
        print(f"✓ Reports: {len(reports)}")
        print(f"✓ Results: {json_path.name}, {csv_path.name}")

        assert len(reports) == len(manifest.captures()), "Every capture should be evaluated"
        assert all(r.metrics["C1"].count > 0 for r in reports), "Every capture should overlap its GT"

        analyzer = DepthResultAnalyzer(reports, objects)
        written = analyzer.emit_plot_data(Path(tmp) / "plots")
        print(f"✓ Plot files: {len(written)}")
        assert all(p.exists() for p in written), "Plot data should be written"
    print("✓ Metric pipeline test passed!\n")


def test_resolution_table():
    """Test the closed-form MIMO resolution at the evaluation distances"""
    print("Testing Resolution Calculator...")

    for z in (0.30, 0.40, 0.50):
        values = mimo_resolution(QAR5.at(z))
        print(f"✓ z={z:.2f} m: {values['delta_x'] * 1e3:.2f} x {values['delta_y'] * 1e3:.2f} "
              f"x {values['delta_z'] * 1e3:.2f} mm")

    assert np.isclose(mimo_resolution(QAR5)["delta_z"], 0.01108, rtol=5e-3), "Range resolution off"
    print("✓ Resolution test passed!\n")


def run_all_tests():
    """Run all test cases"""
    print("=" * 50)
    print("NEAR-FIELD DEPTH EVALUATION - TEST SUITE")
    print("=" * 50 + "\n")

    tests = [
        test_radar_imaging,
        test_metric_pipeline,
        test_resolution_table,
    ]

    passed = 0
    failed = 0

    for test_func in tests:
        try:
            test_func()
            passed += 1
        except Exception as e:
            print(f"✗ {test_func.__name__} failed: {str(e)}\n")
            failed += 1

    print("=" * 50)
    print(f"TEST RESULTS: {passed} passed, {failed} failed")
    print("=" * 50)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    exit(0 if success else 1)
