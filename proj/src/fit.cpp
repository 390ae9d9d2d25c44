namespace transim {}
