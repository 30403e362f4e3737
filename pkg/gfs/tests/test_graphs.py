import numpy as np
import pytest
from unittest.mock import patch

from gfs.errors import DuplicateEdge, GenerationFailed, GraphError, ParseError, SelfLoop
from gfs.graphs import (
    Graph,
    build_laplacian,
    gen_community_graph,
    gen_cube_graph,
    gen_sensor_graph,
    load_edge_list,
    write_edge_list,
)


def path_graph(n):
    return Graph(n, tuple((i, i + 1, 1.0) for i in range(n - 1)))


def test_laplacian_of_path():
    L = build_laplacian(path_graph(3))
    expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    assert np.array_equal(L.matrix, expected)
    assert np.array_equal(L.degrees, [1, 2, 1])
    assert L.n == 3


def test_laplacian_row_sums_and_spectrum():
    g = gen_sensor_graph(80, 0.3, seed=3)
    L = build_laplacian(g)
    assert np.abs(L.matrix.sum(axis=1)).max() <= 1e-12
    assert np.array_equal(L.matrix, L.matrix.T)
    values = np.linalg.eigvalsh(L.matrix)
    assert values[0] >= -1e-10
    assert abs(values[0]) <= 1e-10
    # connected graph: zero eigenvalue is simple
    assert values[1] > 1e-8


def test_laplacian_is_read_only():
    L = build_laplacian(path_graph(4))
    with pytest.raises(ValueError):
        L.matrix[0, 0] = 5.0


def test_graph_rejects_self_loop():
    with pytest.raises(SelfLoop):
        Graph(3, ((1, 1, 1.0),))


def test_graph_rejects_duplicate_edge_in_either_orientation():
    with pytest.raises(DuplicateEdge):
        Graph(3, ((0, 1, 1.0), (1, 0, 2.0)))


@pytest.mark.parametrize("weight", [0.0, -1.0, float("nan"), float("inf")])
def test_graph_rejects_bad_weight(weight):
    with pytest.raises(GraphError):
        Graph(2, ((0, 1, weight),))


def test_graph_rejects_out_of_range_node():
    with pytest.raises(GraphError):
        Graph(2, ((0, 2, 1.0),))


def test_connectivity_check():
    assert path_graph(5).is_connected()
    assert Graph(1, ()).is_connected()
    assert not Graph(4, ((0, 1, 1.0), (2, 3, 1.0))).is_connected()


def test_networkx_round_trip_keeps_weights():
    g = Graph(3, ((0, 1, 0.5), (1, 2, 2.0)))
    back = Graph.from_networkx(g.to_networkx())
    assert back.n == 3
    assert sorted(back.edges) == sorted(g.edges)


def test_sensor_graph_is_connected_and_deterministic():
    a = gen_sensor_graph(100, 0.25, seed=7)
    b = gen_sensor_graph(100, 0.25, seed=7)
    assert a.is_connected()
    assert a.edges == b.edges
    weights = np.array([w for _, _, w in a.edges])
    # Gaussian kernel with theta = r / 2 at distances below r
    assert np.all(weights <= 1.0)
    assert np.all(weights >= np.exp(-2.0) - 1e-12)


def test_sensor_graph_preconditions():
    with pytest.raises(ValueError):
        gen_sensor_graph(1, 0.3, seed=0)
    with pytest.raises(ValueError):
        gen_sensor_graph(10, 0.0, seed=0)
    with pytest.raises(ValueError):
        gen_sensor_graph(10, 2.0, seed=0)


def test_sensor_graph_gives_up_after_retry_cap():
    with patch("gfs.config.CONNECTIVITY_RETRIES", 3):
        with pytest.raises(GenerationFailed):
            gen_sensor_graph(200, 0.01, seed=0)


def test_community_graph_sizes_and_unit_weights():
    g = gen_community_graph(100, 4, 0.3, 0.02, seed=5)
    assert g.n == 100
    assert g.is_connected()
    assert {w for _, _, w in g.edges} == {1.0}


def test_community_graph_preconditions():
    with pytest.raises(ValueError):
        gen_community_graph(10, 2, 0.1, 0.2, seed=0)
    with pytest.raises(ValueError):
        gen_community_graph(10, 11, 0.5, 0.1, seed=0)


def test_cube_graph_counts():
    g = gen_cube_graph(4, 3)
    assert g.n == 64
    # 3 * side^2 * (side - 1) lattice edges
    assert len(g.edges) == 3 * 16 * 3
    assert g.is_connected()


def test_edge_list_round_trip(tmp_path):
    g = gen_sensor_graph(30, 0.4, seed=2)
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    back = load_edge_list(path)
    assert back.n == g.n
    assert back.edges == g.edges


def test_edge_list_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# header\n\n0 1 1.5\n1 2 2\n")
    g = load_edge_list(path)
    assert g.n == 3
    assert g.edges == ((0, 1, 1.5), (1, 2, 2.0))


@pytest.mark.parametrize(
    "text, line",
    [
        ("0 1\n", 1),
        ("0 1 1.0\n1 x 2.0\n", 2),
        ("0 -1 1.0\n", 1),
        ("0 1 0\n", 1),
        ("# only comments\n", 0),
    ],
)
def test_edge_list_parse_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ParseError) as info:
        load_edge_list(path)
    assert info.value.line == line


def test_edge_list_invalid_utf8_is_parse_error(tmp_path):
    path = tmp_path / "latin1.txt"
    path.write_bytes(b"0 1 1.0\n# caf\xe9\n1 2 1.0\n")
    with pytest.raises(ParseError) as info:
        load_edge_list(path)
    assert info.value.line == 2
    assert info.value.reason == "invalid UTF-8"

    crlf = tmp_path / "crlf.txt"
    crlf.write_bytes(b"0 1 1.0\r\n1 2 2.0\r\n")
    assert load_edge_list(crlf).n == 3


def test_edge_list_duplicate_and_self_loop(tmp_path):
    dup = tmp_path / "dup.txt"
    dup.write_text("0 1 1.0\n1 0 1.0\n")
    with pytest.raises(DuplicateEdge, match="line 2"):
        load_edge_list(dup)

    loop = tmp_path / "loop.txt"
    loop.write_text("2 2 1.0\n")
    with pytest.raises(SelfLoop):
        load_edge_list(loop)
