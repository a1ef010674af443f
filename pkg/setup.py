#!/usr/bin/env python3
"""
Setup script for the BiLAF sample selection package
"""

import importlib.util
import os
import subprocess
import sys

# import names of the runtime stack in requirements.txt
ENGINE_MODULES = ("numpy", "scipy", "pandas", "sklearn")


def check_python_version(minimum=(3, 8)):
    """Stop early on interpreters older than the engine supports"""
    found = sys.version_info[:2]
    if found < minimum:
        print(f"Error: BiLAF needs Python {minimum[0]}.{minimum[1]}+, found {found[0]}.{found[1]}")
        sys.exit(1)
    print(f"✓ Python {found[0]}.{found[1]} detected")


def install_requirements(path="requirements.txt"):
    """pip-install the requirements file, then report engine packages still missing"""
    print(f"Installing packages from {path}...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", path])
    except subprocess.CalledProcessError as e:
        print(f"⚠ pip exited with code {e.returncode}")

    missing = [name for name in ENGINE_MODULES if importlib.util.find_spec(name) is None]
    if missing:
        print(f"⚠ Still missing: {', '.join(missing)}; the CLI will not start without them")
    else:
        print("✓ numpy, scipy, pandas and scikit-learn are importable")


def create_output_directories():
    """Create the default output directories of the CLI subcommands"""
    directories = [
        "selection_output",
        "evaluation_output",
        "sweep_output",
        "verification_output",
    ]

    for directory in directories:
        os.makedirs(directory, exist_ok=True)
        print(f"✓ Created directory: {directory}")


def run_quick_verification():
    """Run the quick verification suite as a smoke test"""
    result = subprocess.run([sys.executable, "bilaf_cli.py", "verify", "--quick", "--quiet"])
    if result.returncode == 0:
        print("✓ Quick verification passed")
    else:
        print(f"⚠ Quick verification failed (exit code {result.returncode})")


def main():
    """Main setup function"""
    print("=== BiLAF Selection Package Setup ===\n")

    check_python_version()

    install_requirements()

    print("\nCreating output directories...")
    create_output_directories()

    print("\nRunning quick verification...")
    run_quick_verification()

    print("\n=== Setup Complete ===")
    print("\nTo get started:")
    print("1. python run_pipeline.py")
    print("2. python bilaf_cli.py --help")
    print("\nSee README.md for detailed usage instructions.")


if __name__ == "__main__":
    main()
