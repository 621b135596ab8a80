"Service layer for the STAR-RIS energy-efficiency simulator."
