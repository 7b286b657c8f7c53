class IngestError(Exception):
    """Base class for acquisition failures."""


class FetchError(IngestError):
    """Download, checksum, or credential problems."""


class FormatError(IngestError):
    """Raw file does not parse as the expected netCDF or GRIB2 layout."""


class ConvertError(IngestError):
    """Unit mismatches, calendar gaps, or inconsistent series."""
