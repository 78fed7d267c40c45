"""Utils module for spikelab file output and hashing."""

from .file_utils import HashUtils, FileUtils

__all__ = ["HashUtils", "FileUtils"]
