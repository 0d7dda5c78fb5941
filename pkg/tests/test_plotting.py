import numpy as np

from yoho import CLASSES
from yoho.codec import Event
from yoho.metrics import cross_domain_matrix, segment_f1
from yoho.plotting import plot_detection, plot_history, plot_matrix
from yoho.training import TrainHistory


def _report():
    rep = segment_f1(np.array([[1, 0, 0]]), np.array([[1, 1, 0]]))
    return cross_domain_matrix({(s, t): [rep] for s in ("clean", "vehicle_-9dB") for t in ("clean", "vehicle_-9dB")})


def test_figures_written_and_byte_stable(tmp_path):
    hist = TrainHistory([1.0, 0.5, 0.4], [1.1, 0.6, 0.7], "max-epochs", 2)
    for sub in ("a", "b"):
        plot_history(hist, tmp_path / sub / "h.png", title="clean")
        plot_matrix(_report(), tmp_path / sub / "f1.png", "f1")
        plot_matrix(_report(), tmp_path / sub / "er.png", "er")
    for name in ("h.png", "f1.png", "er.png"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a[:8] == b"\x89PNG\r\n\x1a\n"
        assert a == (tmp_path / "b" / name).read_bytes()


def test_detection_plot(tmp_path):
    values = np.random.default_rng(0).standard_normal((40, 500))
    path = plot_detection(values, [Event(0.5, 2.0, "babycry")], [Event(0.6, 1.9, "babycry")], CLASSES,
                          tmp_path / "det.png")
    assert path.stat().st_size > 0


def test_matrix_with_missing_error_rate(tmp_path):
    empty = segment_f1(np.zeros((2, 3)), np.zeros((2, 3)))
    report = cross_domain_matrix({("clean", "clean"): [empty]})
    assert report["cells"][0]["er_mean"] is None
    assert plot_matrix(report, tmp_path / "er.png", "er").stat().st_size > 0
