# MIMO-PA Navigator engine package
