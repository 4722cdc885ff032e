from setuptools import setup, find_packages

setup(
    name="actgraph-prioritizer",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*", "scripts", "examples", "examples.*"]),
    py_modules=["app"],
    install_requires=[
        "numpy==1.24.3",
        "pandas==1.5.3",
        "pydantic>=2.0",
        "click>=8.1",
    ],
    entry_points={"console_scripts": ["actgraph=app:main"]},
    description="Activation-graph test input prioritization for feed-forward classifiers",
    python_requires=">=3.10",
)
