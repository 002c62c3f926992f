# File Name: setup.py
# Created By: ZW
# Created On: 2023-03-02
# Puropse: defines package information and
# requirements for the sitground package

import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="sitground",
    version="0.1.0",
    author="Zach Weber",
    author_email="zach.weber.813@gmail.com",
    description="Active grounding and image ranking for multi-object visual situations",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/zwebbs/sitground",
    project_urls={
        "Bug Tracker": "https://github.com/zwebbs/sitground/issues",
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU Affero General Public License v3 or later (AGPLv3+)",
        'Operating System :: POSIX',
        'Operating System :: MacOS',
    ],
    package_dir={"": "src"},
    packages=setuptools.find_packages(where="src"),
    python_requires=">=3.8",
    install_requires=[
        'numpy>=1.21',
        'scipy>=1.8',
        'matplotlib>=3.5',
    ],
    extras_require={
        'dev': ['build==0.9.0', 'twine==4.0.1', 'pytest>=7.0', 'hypothesis>=6.50']
    },
    entry_points={
        'console_scripts': ['sitground=sitground.cli:main'],
    },
)
