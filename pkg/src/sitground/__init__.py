# File Name: __init__.py
# Created By: ZW
# Created On: 2023-03-02
# Purpose: top-level package init for sitground

__version__ = "0.1.0"
