import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import blocklasso as bl
from blocklasso.graphs import EdgeListError, PartitionError

from helpers import graph_from_weights, one_block_partition


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadEdgeList:
    def test_binary_rows(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\nb,c\n")
        graph = bl.load_edge_list(path, mode="binary")
        assert graph.node_ids == ("a", "b", "c")
        a, b, c = (graph.index_of(v) for v in "abc")
        assert graph.weights[a, b] == 1 and graph.weights[b, c] == 1
        assert graph.weights[a, c] == 0
        assert graph.edge_count == 2

    def test_weighted_duplicates_sum(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b,2\na,b,3\n")
        graph = bl.load_edge_list(path, mode="weighted")
        assert graph.weights[graph.index_of("a"), graph.index_of("b")] == 5

    def test_binary_duplicates_or(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\nb,a\na,b\n")
        graph = bl.load_edge_list(path, mode="binary")
        assert graph.weights[graph.index_of("a"), graph.index_of("b")] == 1

    def test_self_loop_rejected_with_line(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\nc,c\n")
        with pytest.raises(EdgeListError, match=r"line 2.*self-loop"):
            bl.load_edge_list(path, mode="binary")

    def test_negative_weight_rejected(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b,-1\n")
        with pytest.raises(EdgeListError, match="negative"):
            bl.load_edge_list(path, mode="weighted")

    def test_non_integer_weight_rejected(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b,1.5\n")
        with pytest.raises(EdgeListError, match="non-integer"):
            bl.load_edge_list(path, mode="weighted")

    def test_malformed_row_names_line_number(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\na\n")
        with pytest.raises(EdgeListError, match="line 2"):
            bl.load_edge_list(path, mode="binary")

    def test_binary_mode_rejects_weight_column(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b,1\n")
        with pytest.raises(EdgeListError, match="expected 2 columns"):
            bl.load_edge_list(path, mode="binary")

    def test_weighted_mode_requires_weight_column(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\n")
        with pytest.raises(EdgeListError, match="expected 3 columns"):
            bl.load_edge_list(path, mode="weighted")

    def test_tab_delimiter_autodetected(self, tmp_path):
        path = write(tmp_path / "e.tsv", "a\tb\nb\tc\n")
        graph = bl.load_edge_list(path, mode="binary")
        assert graph.node_count == 3

    def test_header_flag(self, tmp_path):
        path = write(tmp_path / "e.csv", "source,target\na,b\n")
        graph = bl.load_edge_list(path, mode="binary", has_header=True)
        assert graph.node_ids == ("a", "b")

    def test_extra_and_file_nodes_are_isolated(self, tmp_path):
        path = write(tmp_path / "e.csv", "a,b\n")
        nodes = write(tmp_path / "n.txt", "z\n\na\n")
        graph = bl.load_edge_list(path, mode="binary", extra_nodes=("q",), node_file=nodes)
        assert graph.node_ids == ("a", "b", "q", "z")
        assert graph.weights[graph.index_of("q")].sum() == 0

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            bl.load_edge_list(tmp_path / "nope.csv")

    @settings(max_examples=25, deadline=None)
    @given(rows=st.permutations(["a,b", "b,c", "c,d", "a,d", "b,d"]), weighted=st.booleans())
    def test_row_order_invariance(self, tmp_path_factory, rows, weighted):
        tmp = tmp_path_factory.mktemp("perm")
        canonical = sorted(rows)
        if weighted:
            rows = [f"{r},2" for r in rows]
            canonical = [f"{r},2" for r in canonical]
        mode = "weighted" if weighted else "binary"
        permuted = bl.load_edge_list(write(tmp / "a.csv", "\n".join(rows) + "\n"), mode=mode)
        reference = bl.load_edge_list(write(tmp / "b.csv", "\n".join(canonical) + "\n"), mode=mode)
        assert permuted.node_ids == reference.node_ids
        assert np.array_equal(permuted.weights, reference.weights)


class TestGraphInvariants:
    def test_diagonal_must_be_zero(self):
        with pytest.raises(ValueError, match="self-loop"):
            bl.Graph(("a", "b"), np.array([[1, 0], [0, 0]]))

    def test_symmetry_required(self):
        with pytest.raises(ValueError, match="symmetric"):
            bl.Graph(("a", "b"), np.array([[0, 1], [0, 0]]))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            bl.Graph(("a", "b"), np.array([[0, -1], [-1, 0]]))

    def test_is_binary(self):
        graph = graph_from_weights(np.array([[0, 2], [2, 0]]))
        assert not graph.is_binary


class TestPartitionFromAttributes:
    def test_cross_product(self):
        attrs = bl.AttributeTable(
            ("n1", "n2", "n3", "n4"),
            {"class": ("1A", "1A", "1B", "1B"), "gender": ("F", "M", "F", "M")},
        )
        partition = bl.partition_from_attributes(attrs, ["class", "gender"])
        assert partition.block_count == 4
        assert partition.block_labels == ("1A-F", "1A-M", "1B-F", "1B-M")

    def test_school_style_blocks(self):
        # 10 classes x 2 genders plus a teacher override block: 21 blocks
        node_ids, classes, genders = [], [], []
        for grade in range(1, 6):
            for section in "AB":
                for gender in "FM":
                    node = f"s{grade}{section}{gender}"
                    node_ids.append(node)
                    classes.append(f"{grade}{section}")
                    genders.append(gender)
        for t in range(3):
            node_ids.append(f"t{t}")
            classes.append("")
            genders.append("")
        attrs = bl.AttributeTable(tuple(node_ids),
                                  {"class": tuple(classes), "gender": tuple(genders)})
        overrides = {f"t{t}": "Teachers" for t in range(3)}
        partition = bl.partition_from_attributes(attrs, ["class", "gender"], overrides)
        assert partition.block_count == 21
        assert "Teachers" in partition.block_labels

    def test_all_override_single_block(self):
        attrs = bl.AttributeTable(("a", "b"), {})
        partition = bl.partition_from_attributes(attrs, [], {"a": "one", "b": "one"})
        assert partition.block_count == 1

    def test_missing_value_names_node(self):
        attrs = bl.AttributeTable(("a", "b"), {"k": ("x", "")})
        with pytest.raises(PartitionError, match="'b'.*'k'"):
            bl.partition_from_attributes(attrs, ["k"])

    def test_override_only_node_is_included(self):
        attrs = bl.AttributeTable(("a",), {"k": ("x",)})
        partition = bl.partition_from_attributes(attrs, ["k"], {"zz": "extra"})
        assert partition.block_of["zz"] == partition.block_labels.index("extra")

    def test_labels_sorted_deterministically(self):
        attrs = bl.AttributeTable(("a", "b", "c"), {"k": ("z", "m", "a")})
        partition = bl.partition_from_attributes(attrs, ["k"])
        assert partition.block_labels == ("a", "m", "z")


class TestPartitionInvariants:
    def test_every_block_used(self):
        with pytest.raises(PartitionError, match="empty blocks"):
            bl.Partition(("x", "y"), {"a": 0})

    def test_index_range(self):
        with pytest.raises(PartitionError, match="out-of-range"):
            bl.Partition(("x",), {"a": 3})


class TestValidate:
    def test_single_block_pass_and_density(self):
        graph = graph_from_weights(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
        report = bl.validate(graph, one_block_partition(graph))
        assert report.passed
        assert report.density == pytest.approx(2 / 3)

    def test_unknown_node_fails(self):
        graph = graph_from_weights(np.zeros((2, 2), dtype=int))
        partition = bl.Partition(("all",), {graph.node_ids[0]: 0,
                                            graph.node_ids[1]: 0, "ghost": 0})
        report = bl.validate(graph, partition)
        assert not report.passed
        assert any("ghost" in msg for msg in report.problems)

    def test_singleton_pair_flagged_data_sparse(self):
        # blocks {v00}, {v01}: the between pair has a dyad but no edge,
        # and each within pair has no dyads at all
        graph = graph_from_weights(np.zeros((2, 2), dtype=int))
        partition = bl.Partition(("L", "R"), {graph.node_ids[0]: 0, graph.node_ids[1]: 1})
        report = bl.validate(graph, partition)
        assert report.passed
        assert ("L", "R") in report.data_sparse_pairs
        assert ("L", "L") in report.empty_pairs and ("R", "R") in report.empty_pairs

    def test_report_serializes(self):
        graph = graph_from_weights(np.zeros((2, 2), dtype=int))
        report = bl.validate(graph, one_block_partition(graph))
        assert "status: PASS" in report.to_text()
        assert report.to_json_dict()["passed"] is True
