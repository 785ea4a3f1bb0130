from .data_io import ParseError, generate_synthetic, parse_letor, write_letor

__all__ = ["ParseError", "generate_synthetic", "parse_letor", "write_letor"]
