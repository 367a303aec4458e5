"""Command-line tools: suites, rendering and a mock chat endpoint."""
