# Schema tests package
