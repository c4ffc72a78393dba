#!/usr/bin/env python3
"""
Launcher for the inpainting tools
Checks the numeric stack is importable, then hands the arguments to the CLI
"""

import sys
from pathlib import Path

# Add the current directory to Python path
sys.path.insert(0, str(Path(__file__).parent))

REQUIRED_PACKAGES = {
    'numpy': 'numpy',
    'cv2': 'opencv-python',
    'PIL': 'Pillow',
    'skimage': 'scikit-image',
    'reportlab': 'reportlab',
    'dotenv': 'python-dotenv',
}


def missing_dependencies():
    """Return the pip names of required packages that fail to import"""
    missing = []
    for module, distribution in REQUIRED_PACKAGES.items():
        try:
            __import__(module)
        except ImportError:
            missing.append(distribution)
    return missing


def check_dependencies():
    """Check if all required dependencies are installed"""
    missing_packages = missing_dependencies()
    if missing_packages:
        print("Missing required packages:", file=sys.stderr)
        for package in missing_packages:
            print(f"  - {package}", file=sys.stderr)
        print("\nPlease install missing packages using:", file=sys.stderr)
        print("pip install -r requirements.txt", file=sys.stderr)
        return False
    return True


def main(argv=None):
    """Main launcher entry point"""
    if not check_dependencies():
        return 1
    from cli import main as cli_main
    return cli_main(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
