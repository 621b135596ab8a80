"Channel model, STAR-RIS coefficients and NOMA rate physics."
