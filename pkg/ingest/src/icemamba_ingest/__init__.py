"""Acquisition side of the forecasting system: fetch raw archives and convert
them into IMGR series files plus stats manifests that the forecasting package
reads through its documented file formats."""

__version__ = "0.1.0"
