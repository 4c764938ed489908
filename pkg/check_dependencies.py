#!/usr/bin/env python3
"""
Pre-flight check script to verify all dependencies are installed
"""

import sys
import importlib.util

def check_module(module_name, package_name=None):
    """Check if a module is available"""
    if package_name is None:
        package_name = module_name

    spec = importlib.util.find_spec(module_name)
    if spec is None:
        print(f"❌ {package_name} is NOT installed")
        return False
    else:
        print(f"✅ {package_name} is installed")
        return True

def check_numpy_spawn():
    """Generator.spawn (numpy 1.25+) provides the independent random substreams"""
    try:
        import numpy as np
    except ImportError:
        return False
    if hasattr(np.random.Generator, "spawn"):
        print(f"✅ numpy {np.__version__} supports Generator.spawn")
        return True
    print(f"❌ numpy {np.__version__} is too old: 1.25+ is required for Generator.spawn")
    return False

def main():
    print("Checking steincc dependencies...\n")

    all_ok = True

    print(f"Python version: {sys.version}")
    if sys.version_info < (3, 10):
        print("⚠️  Warning: Python 3.10+ is required")
        all_ok = False
    print()

    print("Core Dependencies:")
    all_ok &= check_module("numpy")
    all_ok &= check_numpy_spawn()
    all_ok &= check_module("scipy")
    all_ok &= check_module("tomli_w", "tomli-w")

    # Check tomllib (built-in for Python 3.11+) or tomli
    if sys.version_info >= (3, 11):
        all_ok &= check_module("tomllib", "tomllib (built-in)")
    else:
        all_ok &= check_module("tomli")

    print()

    print("Test Dependencies:")
    pytest_ok = check_module("pytest")
    if not pytest_ok:
        print("  ℹ️  The test suite will not run without pytest")

    print()

    if all_ok:
        print("✅ All required dependencies are installed!")
        print("\nYou can now run an experiment with:")
        print("  python3 -m steincc --experiment null-calibration --out results.csv")
        return 0
    else:
        print("❌ Some dependencies are missing!")
        print("\nTo install missing Python dependencies:")
        print("  pip install -r requirements.txt")
        return 1

if __name__ == "__main__":
    sys.exit(main())
