import struct

import numpy as np
import pytest

from dcenet.dataset import DatasetError, GridHeader, default_layout, load, read_header


def write_toy(path, header: GridHeader, rng):
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sI7I",
                b"CE3D", 1, header.n_samples, header.n_rx, header.n_tx,
                header.n_symbols, header.n_subcarriers, header.k_dmrs,
                header.n_p_per_symbol,
            )
        )
        samples = []
        for i in range(header.n_samples):
            grid = rng.standard_normal(2 * header.grid_len).astype("<f4")
            ls = rng.standard_normal(2 * header.ls_len).astype("<f4")
            fh.write(grid.tobytes())
            fh.write(ls.tobytes())
            fh.write(struct.pack("<fQ", 0.125, 11 + i))
            samples.append((grid, ls))
    return samples


class TestReader:
    def test_round_trip(self, tmp_path):
        header = GridHeader(3, 2, 2, 4, 6, 2, 2)
        rng = np.random.default_rng(0)
        samples = write_toy(tmp_path / "t.bin", header, rng)
        got, channels, ls, noise, seeds = load(tmp_path / "t.bin")
        assert got == header
        for i, (grid, lsraw) in enumerate(samples):
            assert np.array_equal(channels[i].real, grid[0::2])
            assert np.array_equal(channels[i].imag, grid[1::2])
            assert np.array_equal(ls[i].real, lsraw[0::2])
            assert np.array_equal(ls[i].imag, lsraw[1::2])
        assert np.all(noise == np.float32(0.125))
        assert list(seeds) == [11, 12, 13]

    def test_bad_magic_names_field(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XXXX" + b"\0" * 32)
        with pytest.raises(DatasetError, match="magic"):
            read_header(p)

    def test_bad_version_names_field(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(struct.pack("<4sI7I", b"CE3D", 9, 1, 1, 1, 1, 1, 1, 1))
        with pytest.raises(DatasetError, match="version"):
            read_header(p)

    def test_zero_dim_names_field(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(struct.pack("<4sI7I", b"CE3D", 1, 1, 0, 1, 1, 1, 1, 1))
        with pytest.raises(DatasetError, match="n_rx"):
            read_header(p)

    def test_truncated_sample(self, tmp_path):
        header = GridHeader(2, 1, 1, 2, 2, 1, 1)
        rng = np.random.default_rng(1)
        write_toy(tmp_path / "t.bin", header, rng)
        data = (tmp_path / "t.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(data[:-6])
        with pytest.raises(DatasetError, match="sample 1"):
            load(tmp_path / "t.bin")

    def test_exported_file_header(self, exported_dataset):
        header = read_header(exported_dataset)
        assert header.n_samples == 512
        assert (header.n_rx, header.n_tx) == (2, 2)
        assert (header.n_symbols, header.n_subcarriers) == (14, 12)
        assert (header.k_dmrs, header.n_p_per_symbol) == (2, 3)


class TestDefaultLayout:
    def test_desk_layout(self):
        header = GridHeader(1, 2, 2, 14, 12, 2, 3)
        layout = default_layout(header)
        assert layout.dmrs_symbols == (3, 10)
        assert layout.port_subcarriers[0] == (0, 4, 8)
        assert layout.port_subcarriers[1] == (1, 5, 9)

    def test_ports_disjoint(self):
        header = GridHeader(1, 2, 4, 14, 12, 2, 3)
        layout = default_layout(header)
        seen = set()
        for port in range(4):
            res = set(layout.port_res(port))
            assert not seen & res
            seen |= res

    def test_explicit_symbols(self):
        header = GridHeader(1, 1, 1, 10, 8, 2, 2)
        layout = default_layout(header, dmrs_symbols=(1, 8))
        assert layout.dmrs_symbols == (1, 8)
        with pytest.raises(DatasetError, match="dmrs_symbols"):
            default_layout(header, dmrs_symbols=(1, 2, 3))

    def test_ls_values_land_on_layout_positions(self, exported_dataset):
        # LS pilot estimates in the file are the true channel at the layout's
        # pilot REs plus noise: correlation with the channel there is strong
        header, channels, ls, noise, _ = load(exported_dataset)
        layout = default_layout(header)
        n_res = header.n_res
        pilots = header.pilots_per_port
        err_power = []
        for pair in range(header.n_pairs):
            port = pair % header.n_tx
            idx = layout.port_flat_indices(port, header.n_subcarriers) + pair * n_res
            true_at_pilots = channels[:, idx]
            ls_pair = ls[:, pair * pilots : (pair + 1) * pilots]
            err_power.append(np.mean(np.abs(ls_pair - true_at_pilots) ** 2))
        # the residual is exactly the LS noise; compare against recorded levels
        assert np.mean(err_power) == pytest.approx(float(np.mean(noise)), rel=0.1)
