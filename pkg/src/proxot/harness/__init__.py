"""File formats, experiment drivers and the ``proxot`` command line."""

from .io import (
    EmptyImage,
    MalformedFile,
    PpmImage,
    decode_ppm,
    encode_ppm,
    read_histogram,
    read_matrix,
    read_ppm,
    read_trace_csv,
    write_matrix,
    write_ppm,
    write_trace_csv,
)
