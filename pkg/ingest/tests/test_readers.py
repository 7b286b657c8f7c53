import numpy as np
import pytest

from conftest import grib2_message, iso_range, write_era5_like_nc, write_nsidc_like

from icemamba_ingest.errors import FormatError
from icemamba_ingest.grib2 import read_grib2
from icemamba_ingest.netcdf import months_from_time, read_netcdf


class TestNetcdfReader:
    def test_reads_values_and_flags(self, tmp_path):
        path = tmp_path / "sic.nc"
        conc, land, hole = write_nsidc_like(path, iso_range("2001-01", "2001-12"))
        contents = read_netcdf(path)
        var = contents["cdr_seaice_conc_monthly"]
        assert var.data.shape == conc.shape
        assert set(var.flags.values()) == {"pole_hole", "coastline", "land"}
        np.testing.assert_allclose(var.data[0, 2:, :], conc[0, 2:, :], rtol=1e-6)

    def test_time_decoding_months_since(self, tmp_path):
        path = tmp_path / "sic.nc"
        months = iso_range("1999-11", "2000-03")
        write_nsidc_like(path, months)
        contents = read_netcdf(path)
        assert months_from_time(contents["time"]) == months

    def test_missing_variable(self, tmp_path):
        path = tmp_path / "sic.nc"
        write_nsidc_like(path, iso_range("2001-01", "2001-12"))
        with pytest.raises(FormatError, match="nothere"):
            read_netcdf(path, ["nothere"])

    def test_not_hdf5(self, tmp_path):
        path = tmp_path / "junk.nc"
        path.write_bytes(b"this is not netcdf")
        with pytest.raises(FormatError):
            read_netcdf(path)


class TestGrib2Reader:
    def test_roundtrip_single_message(self, tmp_path, rng):
        lats = np.linspace(90, 30, 13)
        lons = np.arange(0, 360, 15.0)
        values = rng.normal(250, 20, size=(13, 24))
        blob = grib2_message(values, lats, lons, 2005, 7, discipline=0, category=0, parameter=0)
        path = tmp_path / "one.grib2"
        path.write_bytes(blob)
        msgs = read_grib2(path)
        assert len(msgs) == 1
        msg = msgs[0]
        assert msg.month_iso == "2005-07"
        assert msg.param_key == "0-0-0"
        np.testing.assert_allclose(msg.lats, lats, atol=1e-5)
        np.testing.assert_allclose(msg.lons, lons, atol=1e-5)
        scale = values.max() - values.min()
        np.testing.assert_allclose(msg.values, values, atol=scale / 2**15)

    def test_multi_message_stream(self, tmp_path, rng):
        lats = np.linspace(80, 40, 5)
        lons = np.arange(0, 360, 60.0)
        blobs = b"".join(
            grib2_message(rng.normal(size=(5, 6)), lats, lons, 2010, m) for m in (1, 2, 3)
        )
        path = tmp_path / "stream.grib2"
        path.write_bytes(blobs)
        msgs = read_grib2(path)
        assert [m.month_iso for m in msgs] == ["2010-01", "2010-02", "2010-03"]

    def test_rejects_non_grib(self, tmp_path):
        path = tmp_path / "bad.grib2"
        path.write_bytes(b"NOPE")
        with pytest.raises(FormatError, match="not a GRIB"):
            read_grib2(path)

    def test_rejects_truncated_message(self, tmp_path, rng):
        lats = np.linspace(80, 40, 5)
        lons = np.arange(0, 360, 60.0)
        blob = grib2_message(rng.normal(size=(5, 6)), lats, lons, 2010, 1)
        path = tmp_path / "cut.grib2"
        path.write_bytes(blob[:-6])
        with pytest.raises(FormatError):
            read_grib2(path)
