"Utility helpers for the STAR-RIS energy-efficiency simulator."
