"""xvaforge version information"""

__version__ = "0.3.0"

# Version of the scenario file format accepted by the JSON scenario repository
SCENARIO_SCHEMA_VERSION = "1.0"

# Version of the emitted report document (docs/report_schema.json)
REPORT_SCHEMA_VERSION = "1.0"

# Version history:
# 0.1.0 - Linear pricer and oracles
# 0.2.0 - Nonlinear BSDE and Picard routes
# 0.3.0 - External funding, incomplete market, verify mode


def parse_version(version_str: str) -> tuple:
    """Parse version string to tuple for comparison (e.g., '1.0' -> (1, 0))"""
    version_str = version_str.lstrip("v")
    try:
        parts = version_str.split(".")
        return tuple(int(p) for p in parts[:3])
    except (ValueError, AttributeError):
        return (0, 0, 0)


def is_supported_schema(version_str: str, supported: str = SCENARIO_SCHEMA_VERSION) -> bool:
    """A scenario file is readable when its major version matches ours"""
    remote = parse_version(str(version_str))
    current = parse_version(supported)
    return remote[:1] == current[:1] and remote != (0, 0, 0)
