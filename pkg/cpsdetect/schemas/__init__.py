# Pydantic schemas for run configuration and reports
