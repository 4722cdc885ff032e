import numpy as np
import pytest

from models.tensor import LabeledDataset, Tensor
from services.tensor_io_service import (
    decode_labels,
    decode_tensor,
    encode_labels,
    encode_tensor,
    read_dataset,
    read_features_csv,
    read_labels,
    read_scores_csv,
    read_tensor,
    write_dataset,
    write_features_csv,
    write_labels,
    write_scores_csv,
    write_tensor,
)
from src.errors import (
    BadMagic,
    CountMismatch,
    FormatError,
    NonFiniteData,
    ShapeMismatch,
    TruncatedPayload,
)


class TestTensorFiles:
    def test_golden_fixture_parses_little_endian(self, fixtures_dir):
        tensor = read_tensor(fixtures_dir / "golden_2x2.agtd")
        assert tensor.shape == (2, 2)
        assert tensor.data.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_golden_fixture_bytes_are_reproduced(self, fixtures_dir, tmp_path):
        out = tmp_path / "t.agtd"
        write_tensor(Tensor((2, 2), [1, 2, 3, 4]), out)
        assert out.read_bytes() == (fixtures_dir / "golden_2x2.agtd").read_bytes()

    def test_round_trip_is_bit_exact(self, tmp_path):
        values = np.array([[0.1, -2.5e-8, 3.0], [1e30, -0.0, 7.25]], dtype=np.float32)
        out = tmp_path / "t.agtd"
        write_tensor(Tensor.from_array(values), out)
        back = read_tensor(out)
        assert back == Tensor.from_array(values)
        assert back.to_array().view(np.uint32).tolist() == values.view(np.uint32).tolist()

    def test_two_writes_are_byte_identical(self, tmp_path):
        tensor = Tensor((3,), [1.5, 2.5, 3.5])
        write_tensor(tensor, tmp_path / "a.agtd")
        write_tensor(tensor, tmp_path / "b.agtd")
        assert (tmp_path / "a.agtd").read_bytes() == (tmp_path / "b.agtd").read_bytes()

    def test_empty_tensor_is_legal(self, tmp_path):
        write_tensor(Tensor((0,), []), tmp_path / "e.agtd")
        tensor = read_tensor(tmp_path / "e.agtd")
        assert tensor.shape == (0,)
        assert tensor.data.size == 0

    def test_bad_magic(self, fixtures_dir):
        payload = b"XXXX" + (fixtures_dir / "golden_2x2.agtd").read_bytes()[4:]
        with pytest.raises(BadMagic):
            decode_tensor(payload)

    def test_truncated_payload(self, fixtures_dir):
        payload = (fixtures_dir / "golden_2x2.agtd").read_bytes()
        with pytest.raises(TruncatedPayload):
            decode_tensor(payload[:-2])
        with pytest.raises(TruncatedPayload):
            decode_tensor(payload[:10])

    def test_extra_data_is_a_shape_mismatch(self, fixtures_dir):
        payload = (fixtures_dir / "golden_2x2.agtd").read_bytes()
        with pytest.raises(ShapeMismatch):
            decode_tensor(payload + b"\x00\x00\x80\x3f")

    def test_nan_is_refused(self):
        with pytest.raises(NonFiniteData):
            Tensor((2,), [1.0, float("nan")])

    def test_nan_payload_is_refused_on_read(self):
        payload = encode_tensor(Tensor((1,), [1.0]))[:-4] + np.array([np.inf], dtype="<f4").tobytes()
        with pytest.raises(NonFiniteData):
            decode_tensor(payload)

    def test_shape_and_data_must_agree(self):
        with pytest.raises(ShapeMismatch):
            Tensor((2, 3), [1, 2, 3])


class TestLabelFiles:
    def test_golden_labels_with_flags(self, fixtures_dir):
        labels, flags = read_labels(fixtures_dir / "golden_labels.aglb")
        assert labels.tolist() == [0, 1, 2]
        assert flags.tolist() == [0, 1, 0]

    @pytest.mark.parametrize("labels", [[0, 1, 2], []])
    def test_round_trip(self, tmp_path, labels):
        write_labels(tmp_path / "l.aglb", labels)
        back, flags = read_labels(tmp_path / "l.aglb")
        assert back.tolist() == labels
        assert flags is None

    def test_header_count_larger_than_payload(self):
        payload = bytearray(encode_labels([0, 1, 2]))
        payload[4] = 5
        with pytest.raises(CountMismatch):
            decode_labels(bytes(payload))

    def test_trailing_bytes(self):
        with pytest.raises(CountMismatch):
            decode_labels(encode_labels([0, 1]) + b"\x00")

    def test_flags_must_be_binary(self):
        with pytest.raises(CountMismatch):
            encode_labels([0, 1], [0, 2])

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            decode_labels(b"AGTD" + encode_labels([1])[4:])


class TestDatasets:
    def test_dataset_round_trip(self, tmp_path):
        dataset = LabeledDataset(
            inputs=Tensor.from_array(np.arange(12, dtype=np.float32).reshape(3, 2, 2)),
            labels=[2, 0, 1],
            flags=[1, 0, 0],
        )
        write_dataset(dataset, tmp_path / "x.agtd", tmp_path / "y.aglb")
        back = read_dataset(tmp_path / "x.agtd", tmp_path / "y.aglb")
        assert back.inputs == dataset.inputs
        assert back.labels.tolist() == [2, 0, 1]
        assert back.flags.tolist() == [1, 0, 0]

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            LabeledDataset(inputs=Tensor((2, 1), [1, 2]), labels=[0])

    def test_label_range(self):
        dataset = LabeledDataset(inputs=Tensor((2, 1), [1, 2]), labels=[0, 3])
        with pytest.raises(CountMismatch):
            dataset.validate_classes(3)


class TestCsv:
    def test_scores_csv_in_priority_order(self, tmp_path):
        out = tmp_path / "s.csv"
        write_scores_csv(out, np.array([0.1, 0.9, 0.5]), order=[1, 2, 0])
        assert out.read_text() == "index,score\n1,0.9\n2,0.5\n0,0.1\n"
        assert read_scores_csv(out).tolist() == [0.1, 0.9, 0.5]

    def test_scores_use_shortest_round_trip(self, tmp_path):
        out = tmp_path / "s.csv"
        values = np.array([1 / 3, np.float32(0.1)])
        write_scores_csv(out, values)
        assert read_scores_csv(out).tolist() == values.tolist()

    def test_scores_indices_must_be_a_permutation(self, tmp_path):
        out = tmp_path / "s.csv"
        out.write_text("index,score\n0,1\n0,2\n")
        with pytest.raises(CountMismatch):
            read_scores_csv(out)

    def test_features_csv_header(self, tmp_path):
        out = tmp_path / "f.csv"
        write_features_csv(out, np.array([[0.5, 1.0], [0.0, 2.0]]))
        assert out.read_text().splitlines()[0] == "index,f0,f1"
        assert read_features_csv(out).tolist() == [[0.5, 1.0], [0.0, 2.0]]

    @pytest.mark.parametrize(
        "text",
        ["", "index,score\nzero,0.5\none,0.1\n", "index,score\n0,high\n", "index,score\n0\n1,0.2,7\n"],
    )
    def test_unreadable_scores_csv(self, tmp_path, text):
        out = tmp_path / "s.csv"
        out.write_text(text)
        with pytest.raises(FormatError):
            read_scores_csv(out)

    def test_features_csv_needs_index_column(self, tmp_path):
        out = tmp_path / "f.csv"
        out.write_text("f0,f1\n0.5,1\n")
        with pytest.raises(CountMismatch):
            read_features_csv(out)

    def test_non_numeric_features(self, tmp_path):
        out = tmp_path / "f.csv"
        out.write_text("index,f0\n0,abc\n")
        with pytest.raises(FormatError):
            read_features_csv(out)
