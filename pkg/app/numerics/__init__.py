"Neural-network and linear-algebra substrate."
