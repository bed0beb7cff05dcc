"""
Lab health check: numerical dependencies and output directories.
"""

import importlib
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

# import name -> distribution name
REQUIRED_PACKAGES = {
    'numpy': 'numpy',
    'scipy': 'scipy',
    'pandas': 'pandas',
    'reportlab': 'reportlab',
    'decouple': 'python-decouple',
    'django': 'django',
}


def check_system_status(output_dirs: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Check the status of all required packages and the lab output directories."""
    status = {"status": "operational", "components": {}, "errors": []}

    for module, package in REQUIRED_PACKAGES.items():
        try:
            imported = importlib.import_module(module)
            version = getattr(imported, '__version__', None) or getattr(imported, 'VERSION', '')
            status["components"][package] = f"available {version}".strip() if isinstance(version, str) else "available"
        except ImportError:
            status["components"][package] = "missing"
            status["errors"].append(f"Missing required package: {package}")

    for directory in output_dirs or []:
        dir_path = Path(directory)
        if not dir_path.exists():
            try:
                dir_path.mkdir(parents=True, exist_ok=True)
                status["components"][f"dir_{directory}"] = "created"
            except OSError as e:
                status["components"][f"dir_{directory}"] = "error"
                status["errors"].append(f"Could not create directory {directory}: {str(e)}")
        else:
            status["components"][f"dir_{directory}"] = "available"

    if status["errors"]:
        status["status"] = "degraded" if len(status["errors"]) < len(REQUIRED_PACKAGES) else "error"

    status["report_formats"] = ["csv"]
    if status["components"].get("reportlab", "").startswith("available"):
        status["report_formats"].extend(["svg", "pdf"])
    return status
